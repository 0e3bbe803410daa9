#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "syntrans/nnkit.hpp"

namespace syntrans::nn {

// One named tensor inside a "SYNW" checkpoint. Payload is float32 row-major;
// training arithmetic stays in double and converts at the file boundary.
struct TensorRecord {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<TensorRecord>& tensors);
std::vector<TensorRecord> load_checkpoint(const std::filesystem::path& path);

const TensorRecord& find_tensor(const std::vector<TensorRecord>& tensors, std::string_view name);

TensorRecord matrix_record(const std::string& name, const num::Matrix& m);
TensorRecord vector_record(const std::string& name, const num::Vector& v);
num::Matrix record_to_matrix(const TensorRecord& rec);
num::Vector record_to_vector(const TensorRecord& rec);

// Layer helpers using the "<prefix>.W" / "<prefix>.b" naming convention.
void append_layer_records(std::vector<TensorRecord>& out, const std::string& prefix,
                          const AffineLayer& layer);
AffineLayer layer_from_records(const std::vector<TensorRecord>& tensors, const std::string& prefix,
                               bool with_bias = true);

} // namespace syntrans::nn
