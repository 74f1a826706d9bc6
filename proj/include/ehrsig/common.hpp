#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ehrsig {

inline constexpr double kDaysPerYear = 365.25;

// Default floor (events/year) for code intensities; also the imputed baseline
// rate used when a record has no events on a code channel.
inline constexpr double kIntensityFloorPerYear = 0.05;

enum class ChannelKind { Code, Measurement, Medication, Demographic };

struct ChannelId {
  ChannelKind kind;
  std::string name;

  friend auto operator<=>(const ChannelId&, const ChannelId&) = default;
};

// How a channel row of X is brought onto a common scale before ICA.
enum class RowTransform { LogAffine, Affine, Identity };

// Code intensities are logged then centered/scaled; measurements and age are
// centered/scaled; binary channels (medication, sex, race) pass through.
RowTransform standardization_rule(const ChannelId& channel);

const char* to_string(ChannelKind kind);
const char* to_string(RowTransform transform);
ChannelKind channel_kind_from_string(const std::string& s);
RowTransform row_transform_from_string(const std::string& s);

// Error taxonomy; the CLI maps these onto its documented exit codes.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void log_warn(const std::string& message);
void set_warnings_enabled(bool enabled);

// Independent stream seed derived from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace ehrsig
