#pragma once

// Checkpoint layout (all integers little-endian u32):
//
//   "STAL" | version
//   repeated until EOF:
//     name_len | name bytes (UTF-8) | rank | dims[rank] | f32 payload[prod(dims)]

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "stalign/autodiff/parameters.hpp"

namespace stalign::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;

    bool operator==(const NamedArray&) const = default;
};

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);
/// Overwrites every parameter in `store` from the file. Missing, extra, or
/// differently shaped entries raise CheckpointError naming the parameter.
void load_checkpoint(ParameterStore& store, const std::filesystem::path& path);

}  // namespace stalign::ad
