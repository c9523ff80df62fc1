#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sicl/config.hpp"
#include "sicl/errors.hpp"

namespace sicl {
namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << body;
  return path;
}

TEST(Config, DeskDefaultIsValidAndSplitsTwelveSubjects) {
  const RunConfig c = RunConfig::desk_default();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.split.train_subjects, (std::set<int>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(c.split.test_subjects, (std::set<int>{8, 9, 10, 11}));
  EXPECT_EQ(c.world.num_subjects, 12);
  EXPECT_EQ(c.world.num_activities, 6);
  EXPECT_DOUBLE_EQ(c.world.subject_nuisance_strength, 0.8);
  EXPECT_DOUBLE_EQ(c.tau, 0.1);
  EXPECT_EQ(c.pretrain_epochs, 60);
  EXPECT_EQ(c.linear_epochs, 30);
}

TEST(Config, JsonRoundTripIsLossless) {
  RunConfig c = RunConfig::desk_default();
  c.loss = LossKind::kSiCmc;
  c.tau = 0.07;
  c.seed = 0xfeedbeefcafeULL;
  c.world.rng_seed = 77;
  c.augmentation.scale_lo = 0.8;
  c.augmentation.rng_seed = 3;
  const nlohmann::json j = c;
  const RunConfig back = j.get<RunConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.loss, LossKind::kSiCmc);
}

TEST(Config, LossNamesRoundTrip) {
  for (LossKind k : {LossKind::kNce, LossKind::kSicl, LossKind::kSupCon, LossKind::kSiSupCon, LossKind::kCmc,
                     LossKind::kSiCmc}) {
    EXPECT_EQ(parse_loss(loss_name(k)), k);
  }
  EXPECT_THROW(parse_loss("simclr"), ContractError);
  EXPECT_TRUE(is_cross_modal(LossKind::kSiCmc));
  EXPECT_FALSE(is_cross_modal(LossKind::kSicl));
  EXPECT_TRUE(is_supervised(LossKind::kSiSupCon));
}

TEST(Config, OverridesWinOverFileValues) {
  const auto path = write_temp("sicl_cfg_a.json", R"({"tau": 0.5, "world": {"num_subjects": 14}, "loss": "nce"})");
  const RunConfig c = load_config(path.string(), {"tau=0.2", "world.windows_per_pair=3", "loss=supcon"});
  std::filesystem::remove(path);
  EXPECT_DOUBLE_EQ(c.tau, 0.2);
  EXPECT_EQ(c.world.num_subjects, 14);
  EXPECT_EQ(c.world.windows_per_pair, 3);
  EXPECT_EQ(c.loss, LossKind::kSupCon);
  // Untouched defaults survive the merge.
  EXPECT_EQ(c.pretrain_epochs, 60);
}

TEST(Config, OverrideValuesParseAsJsonWhenPossible) {
  const RunConfig c = load_config(std::nullopt, {"split.train_subjects=[0,1,2]", "split.test_subjects=[3]",
                                                 "augmentation.rotation_enabled=false"});
  EXPECT_EQ(c.split.train_subjects, (std::set<int>{0, 1, 2}));
  EXPECT_FALSE(c.augmentation.rotation_enabled);
}

TEST(Config, UnknownKeysAreRejectedAtEveryLevel) {
  EXPECT_THROW(load_config(std::nullopt, {"temperature=0.1"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"world.num_subject=4"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"augmentation.jitter=0.1"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"split.validation_subjects=[1]"}), ContractError);
}

TEST(Config, MalformedInputsAreContractErrors) {
  EXPECT_THROW(load_config(std::nullopt, {"tau"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"=3"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"tau=fast"}), ContractError);
  EXPECT_THROW(load_config("/nonexistent/config.json", {}), ContractError);
  const auto path = write_temp("sicl_cfg_b.json", "{ not json");
  EXPECT_THROW(load_config(path.string(), {}), ContractError);
  std::filesystem::remove(path);
}

TEST(Config, ValidationRejectsBadValues) {
  EXPECT_THROW(load_config(std::nullopt, {"tau=0"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"lr=-1"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"pretrain_epochs=0"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"batch_size=2"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"split.test_subjects=[7,8]"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"split.test_subjects=[12]"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"split.train_subjects=[]"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"world.subject_nuisance_strength=1.5"}), ContractError);
  EXPECT_THROW(load_config(std::nullopt, {"augmentation.scale_range=[1.2,0.8]"}), ContractError);
}

TEST(Config, EchoReloadsToTheSameConfig) {
  const RunConfig c = load_config(std::nullopt, {"seed=9", "loss=si_supcon"});
  const auto path = write_temp("sicl_cfg_echo.json", nlohmann::json(c).dump(2));
  const RunConfig back = load_config(path.string(), {});
  std::filesystem::remove(path);
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
}

}  // namespace
}  // namespace sicl
