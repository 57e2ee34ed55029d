#pragma once

#include <string>

#include "json.hpp"
#include "vdt/tensor.hpp"

namespace vdt::io {

using json = nlohmann::json;

/// Save/load a Tensor as a .npy file (little-endian float64, C order).
void save_npy(const std::string& path, const Tensor& t);
Tensor load_npy(const std::string& path);

/// Atomic text write (temp file + rename).
void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

void write_json_atomic(const std::string& path, const json& j);
json read_json(const std::string& path);

/// Array + sidecar manifest pair: <base>.npy and <base>.json. The manifest
/// always records shape and dtype; extra fields (fps, value_range, config
/// hash, ...) are caller-provided.
void save_array_with_manifest(const std::string& base, const Tensor& t, json extra = {});
Tensor load_array_checked(const std::string& base, json* manifest_out = nullptr);

/// Binary PPM (P6) export of one frame [H,W,3] with values in [-1,1].
void write_ppm(const std::string& path, const Tensor& frame);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

}  // namespace vdt::io
