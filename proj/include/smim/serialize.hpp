#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "smim/data.hpp"
#include "smim/nn.hpp"

namespace smim {

// Versioned binary model container, bit-exact on round trip:
//   magic "SMIM", format version u32, input shape, output dim,
//   length-prefixed layer list, then parameter tensors as row-major
//   64-bit little-endian reals in layer order (weight then bias).
constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> model_to_bytes(const Model& model);
Model model_from_bytes(const std::vector<std::uint8_t>& bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// FNV-1a 64-bit over a byte buffer; model_hash runs it over the serialized
/// container so identical models hash identically.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len);
std::uint64_t model_hash(const Model& model);

// PreprocessStats sidecar in the same container style (magic "SMST").
void save_preprocess(const PreprocessStats& stats, const std::filesystem::path& path);
PreprocessStats load_preprocess(const std::filesystem::path& path);

}  // namespace smim
