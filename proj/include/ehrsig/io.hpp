#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "ehrsig/common.hpp"

namespace ehrsig::io {

// All writers go through a temp file + rename so a crash never leaves a
// half-written artifact behind.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);
bool file_exists(const std::string& path);
std::uint64_t hash_file(const std::string& path);

void write_json_atomic(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

// Shortest round-trip decimal form, locale independent.
std::string format_double(double v);

// Named dense matrix container: little-endian doubles, column-major.
void write_matrix_bundle(const std::string& path,
                         const std::vector<std::pair<std::string, Eigen::MatrixXd>>& mats);
std::map<std::string, Eigen::MatrixXd> read_matrix_bundle(const std::string& path);

}  // namespace ehrsig::io
