#pragma once

// GTC1 tensor container.
//
//   "GTC1"                      4 bytes ASCII
//   count                       u32 LE
//   per tensor:
//     name length, name         u16 LE, UTF-8 bytes
//     rank, dims                u32 LE each
//     payload                   f32 LE, row-major, product(dims) values
//
// Values are computed in double and rounded to float on write; reading
// widens back to double.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gma3d/numkern/dense_array.hpp"
#include "gma3d/synthgen.hpp"

namespace gma3d::cli {

using numkern::DenseArray;
using NamedTensors = std::vector<std::pair<std::string, DenseArray>>;

// Throws ParameterError on duplicate or over-long names.
std::vector<std::uint8_t> encode_container(const NamedTensors& tensors);
// Throws IoError on malformed input.
NamedTensors decode_container(const std::vector<std::uint8_t>& bytes);

void write_container(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_container(const std::filesystem::path& path);

// Throws IoError if absent.
const DenseArray& find_tensor(const NamedTensors& tensors, const std::string& name);

// Every value rounded through f32, as it would be after a write and read.
DenseArray round_to_float(const DenseArray& a);

// frame1, frame2, gt_flow (N×3 / M×3), occlusion_mask and cluster_id (N,
// as floats), context, motion_in.
NamedTensors scene_to_tensors(const synthgen::SyntheticScene& scene);
synthgen::SyntheticScene scene_from_tensors(const NamedTensors& tensors);

}  // namespace gma3d::cli
