#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "sicl/synthgen.hpp"

namespace sicl {

inline constexpr std::uint16_t kDatasetVersion = 1;

/// Binary container: "SICL", version u16, window count u32, subjects u16,
/// activities u16, steps u16; then per window modality u8, subject u16,
/// activity u16, channels u16 and channels x steps little-endian f64.
void write_dataset(const std::filesystem::path& path, const std::vector<SensorWindow>& windows,
                   const WorldSpec& spec);

struct DatasetFile {
  int num_subjects = 0;
  int num_activities = 0;
  std::vector<SensorWindow> windows;
};

DatasetFile read_dataset(const std::filesystem::path& path);

nlohmann::json dataset_manifest(const WorldSpec& spec, const std::vector<SensorWindow>& windows,
                                const std::set<int>& train_subjects, const std::set<int>& test_subjects);

}  // namespace sicl
