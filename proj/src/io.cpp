#include "ehrsig/io.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ehrsig::io {

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& content) {
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("missing file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return content;
}

bool file_exists(const std::string& path) { return fs::exists(path); }

std::uint64_t hash_file(const std::string& path) {
  std::string content = read_file(path);
  return fnv1a64(content.data(), content.size());
}

void write_json_atomic(const std::string& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const std::string& path) {
  std::string content = read_file(path);
  try {
    return nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[48];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

constexpr char kMagic[8] = {'E', 'H', 'R', 'S', 'I', 'G', 'B', '1'};

template <typename T>
void put(std::string& out, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& in, size_t& off) {
  if (off + sizeof(T) > in.size()) throw ParseError("truncated matrix bundle");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void write_matrix_bundle(const std::string& path,
                         const std::vector<std::pair<std::string, Eigen::MatrixXd>>& mats) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(mats.size()));
  for (const auto& [name, m] : mats) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()),
               sizeof(double) * static_cast<size_t>(m.size()));
  }
  write_file_atomic(path, out);
}

std::map<std::string, Eigen::MatrixXd> read_matrix_bundle(const std::string& path) {
  std::string in = read_file(path);
  size_t off = 0;
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
    throw ParseError(path + ": not a matrix bundle");
  off = sizeof(kMagic);
  auto count = get<std::uint32_t>(in, off);
  std::map<std::string, Eigen::MatrixXd> mats;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = get<std::uint32_t>(in, off);
    if (off + name_len > in.size()) throw ParseError("truncated matrix bundle");
    std::string name(in.data() + off, name_len);
    off += name_len;
    auto rows = get<std::uint64_t>(in, off);
    auto cols = get<std::uint64_t>(in, off);
    size_t bytes = sizeof(double) * rows * cols;
    if (off + bytes > in.size()) throw ParseError("truncated matrix bundle");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::memcpy(m.data(), in.data() + off, bytes);
    off += bytes;
    mats.emplace(std::move(name), std::move(m));
  }
  return mats;
}

}  // namespace ehrsig::io
