#include "sicl/dataset_io.hpp"

#include <fstream>
#include <map>

#include "binio.hpp"
#include "sicl/config.hpp"
#include "sicl/errors.hpp"

namespace sicl {

void write_dataset(const std::filesystem::path& path, const std::vector<SensorWindow>& windows,
                   const WorldSpec& spec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open " + path.string() + " for writing");
  os.write("SICL", 4);
  binio::put<std::uint16_t>(os, kDatasetVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(windows.size()));
  binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(spec.num_subjects));
  binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(spec.num_activities));
  binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(kWindowSteps));
  for (const auto& w : windows) {
    if (w.steps() != kWindowSteps) throw ContractError("write_dataset: window is not 100 steps");
    binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(w.modality));
    binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(w.subject_id));
    binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(w.activity_id));
    binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(w.channels()));
    for (double v : w.values.data()) binio::put<double>(os, v);
  }
  if (!os) throw ContractError("write failed: " + path.string());
}

DatasetFile read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot open dataset " + path.string());
  binio::expect_magic(is, "SICL", path.string());
  const auto version = binio::get<std::uint16_t>(is, "version");
  if (version != kDatasetVersion) {
    throw ContractError(path.string() + ": unsupported dataset version " + std::to_string(version));
  }
  const auto count = binio::get<std::uint32_t>(is, "window count");
  DatasetFile out;
  out.num_subjects = binio::get<std::uint16_t>(is, "subject count");
  out.num_activities = binio::get<std::uint16_t>(is, "activity count");
  const auto steps = binio::get<std::uint16_t>(is, "steps");
  out.windows.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SensorWindow w;
    const auto modality = binio::get<std::uint8_t>(is, "modality");
    if (modality > 1) throw ContractError(path.string() + ": bad modality tag");
    w.modality = static_cast<Modality>(modality);
    w.subject_id = binio::get<std::uint16_t>(is, "subject");
    w.activity_id = binio::get<std::uint16_t>(is, "activity");
    const auto channels = binio::get<std::uint16_t>(is, "channels");
    w.values = Tensor({channels, steps});
    for (double& v : w.values.data()) v = binio::get<double>(is, "sample");
    w.index = i;
    out.windows.push_back(std::move(w));
  }
  return out;
}

nlohmann::json dataset_manifest(const WorldSpec& spec, const std::vector<SensorWindow>& windows,
                                const std::set<int>& train_subjects, const std::set<int>& test_subjects) {
  std::map<std::string, std::size_t> per_modality;
  std::size_t train = 0, test = 0;
  for (const auto& w : windows) {
    ++per_modality[std::string(modality_name(w.modality))];
    train += train_subjects.contains(w.subject_id);
    test += test_subjects.contains(w.subject_id);
  }
  return {
      {"format", "SICL"},
      {"version", kDatasetVersion},
      {"windows", windows.size()},
      {"sessions", windows.size() / 2},
      {"steps", kWindowSteps},
      {"per_modality", per_modality},
      {"world", spec},
      {"split",
       {{"train_subjects", train_subjects},
        {"test_subjects", test_subjects},
        {"train_windows", train},
        {"test_windows", test}}},
  };
}

}  // namespace sicl
