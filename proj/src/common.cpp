#include "ehrsig/common.hpp"

#include <atomic>
#include <cstdio>

namespace ehrsig {

namespace {
std::atomic<bool> g_warnings_enabled{true};
}

RowTransform standardization_rule(const ChannelId& channel) {
  switch (channel.kind) {
    case ChannelKind::Code:
      return RowTransform::LogAffine;
    case ChannelKind::Measurement:
      return RowTransform::Affine;
    case ChannelKind::Medication:
      return RowTransform::Identity;
    case ChannelKind::Demographic:
      // Age is the only non-binary demographic channel.
      return channel.name == "age" ? RowTransform::Affine : RowTransform::Identity;
  }
  throw std::logic_error("unknown channel kind");
}

const char* to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::Code: return "code";
    case ChannelKind::Measurement: return "measurement";
    case ChannelKind::Medication: return "medication";
    case ChannelKind::Demographic: return "demographic";
  }
  return "?";
}

const char* to_string(RowTransform transform) {
  switch (transform) {
    case RowTransform::LogAffine: return "log_affine";
    case RowTransform::Affine: return "affine";
    case RowTransform::Identity: return "identity";
  }
  return "?";
}

ChannelKind channel_kind_from_string(const std::string& s) {
  if (s == "code") return ChannelKind::Code;
  if (s == "measurement") return ChannelKind::Measurement;
  if (s == "medication") return ChannelKind::Medication;
  if (s == "demographic") return ChannelKind::Demographic;
  throw ParseError("unknown channel kind: " + s);
}

RowTransform row_transform_from_string(const std::string& s) {
  if (s == "log_affine") return RowTransform::LogAffine;
  if (s == "affine") return RowTransform::Affine;
  if (s == "identity") return RowTransform::Identity;
  throw ParseError("unknown row transform: " + s);
}

void log_warn(const std::string& message) {
  if (g_warnings_enabled.load(std::memory_order_relaxed)) {
    std::fprintf(stderr, "[ehrsig] warning: %s\n", message.c_str());
  }
}

void set_warnings_enabled(bool enabled) {
  g_warnings_enabled.store(enabled, std::memory_order_relaxed);
}

namespace {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace ehrsig
