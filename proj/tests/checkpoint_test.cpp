// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "agfn/checkpoint.hpp"
#include "agfn/random_instances.hpp"
#include "fixtures.hpp"

using namespace agfn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("agfn_checkpoint_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Checkpoint trained_like(ModelKind kind) {
  const auto env = agfn::testing::setgen_mini(4, 2, 1);
  Checkpoint c;
  c.params = init_params(env, {kind, BackwardMode::learned, 8, 0.01}, 3);
  Rng rng(5);
  randomize_params(c.params, rng, 1.0);
  c.params.set_log_z(1.0 / 3.0);
  c.optimizer = OptimizerState::for_params(c.params, {});
  auto grad = c.params.zeros_like();
  for (auto& t : grad.tensors)
    for (double& v : t.values) v = rng.uniform(-1, 1);
  adam_step(c.params, grad, c.optimizer);
  c.step = 17;
  return c;
}

}  // namespace

TEST(Checkpoint, JsonRoundTripIsExact) {
  for (auto kind : {ModelKind::tabular, ModelKind::mlp}) {
    const auto c = trained_like(kind);
    EXPECT_TRUE(checkpoint_from_json(checkpoint_to_json(c)) == c);
    const auto dir = scratch_dir("roundtrip");
    save_checkpoint(dir / "c.json", c);
    EXPECT_TRUE(load_checkpoint(dir / "c.json") == c);
    EXPECT_FALSE(fs::exists(dir / "c.json.tmp"));
  }
}

TEST(Checkpoint, RejectsBadInput) {
  auto j = checkpoint_to_json(trained_like(ModelKind::tabular));
  auto wrong = j;
  wrong["version"] = 99;
  EXPECT_THROW(checkpoint_from_json(wrong), Error);
  wrong = j;
  wrong["tensors"][0]["values"].push_back(1.0);
  EXPECT_THROW(checkpoint_from_json(wrong), Error);
  wrong = j;
  wrong.erase("optimizer");
  EXPECT_THROW(checkpoint_from_json(wrong), Error);
  const auto dir = scratch_dir("bad");
  write_file_atomic(dir / "x.json", "{ not json");
  EXPECT_THROW(load_checkpoint(dir / "x.json"), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), Error);
}

TEST(Checkpoint, Compatibility) {
  const auto small = agfn::testing::setgen_mini(4, 2, 1), big = agfn::testing::setgen_mini(5, 3, 1);
  const auto tab = init_params(small, {}, 0);
  EXPECT_NO_THROW(check_compatible(tab, small));
  EXPECT_THROW(check_compatible(tab, big), InvalidArgument);
  const auto mlp = init_params(small, {ModelKind::mlp, BackwardMode::uniform, 8, 0.01}, 0);
  EXPECT_THROW(check_compatible(mlp, big), InvalidArgument);
}

TEST(Checkpoint, AtomicWriteReplacesContent) {
  const auto dir = scratch_dir("atomic");
  write_file_atomic(dir / "sub" / "f.txt", "first");
  write_file_atomic(dir / "sub" / "f.txt", "second");
  EXPECT_EQ(read_file(dir / "sub" / "f.txt"), "second");
  EXPECT_FALSE(fs::exists(dir / "sub" / "f.txt.tmp"));
}

TEST(MetricsCsv, Layout) {
  MetricsRecord r;
  r.step = 30;
  r.alpha = 0.9;
  r.epsilon = 0.5;
  r.loss = 0.25;
  r.modes = 3;
  r.topk_reward = 1.5;
  r.spearman = 0.1;
  r.entropy = 2.0;
  r.mean_length = 4.0;
  EXPECT_EQ(metrics_csv({r}),
            "step,alpha,epsilon,loss,modes,topk_reward,spearman,entropy,mean_length\n"
            "30,0.9,0.5,0.25,3,1.5,0.1,2,4\n");
  EXPECT_EQ(metrics_csv({}), "step,alpha,epsilon,loss,modes,topk_reward,spearman,entropy,mean_length\n");
}
