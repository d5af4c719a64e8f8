// Copyright 2026 The Coupling Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "coupling/error.hpp"
#include "coupling/harness/config.hpp"
#include "coupling/harness/digest.hpp"
#include "coupling/harness/eval.hpp"
#include "coupling/harness/experiment.hpp"
#include "coupling/harness/instances.hpp"
#include "coupling/harness/synthetic.hpp"

namespace coupling::harness {
namespace {

namespace fs = std::filesystem;
using V = std::vector<double>;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() /
                       ("coupling_lab_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  return dir;
}

struct Labels {
  SpacesPtr spaces;
  VerifierRule rule;
};

Labels label_fixture() {
  auto spaces = make_spaces({"s"}, ResponseSpace::parse({"yes <eos>", "no <eos>", "yes then no <eos>",
                                                          "no then yes <eos>", "maybe <eos>"}));
  const auto& a = spaces->responses().alphabet();
  VerifierRule rule;
  rule.class_labels = {{*a.find("yes")}, {*a.find("no")}};
  rule.label_map = {0};
  return {spaces, rule};
}

TEST(RobustDecode, LastOccurrenceWins) {
  const Labels f = label_fixture();
  const auto& space = f.spaces->responses();
  EXPECT_EQ(robust_decode(space.at(0), f.rule), 0u);
  EXPECT_EQ(robust_decode(space.at(1), f.rule), 1u);
  EXPECT_EQ(robust_decode(space.at(2), f.rule), 1u);
  EXPECT_EQ(robust_decode(space.at(3), f.rule), 0u);
  EXPECT_FALSE(robust_decode(space.at(4), f.rule).has_value());
}

TEST(RobustDecode, MultiTokenLabels) {
  auto spaces = make_spaces({"s"}, ResponseSpace::parse({"not ok ok <eos>", "ok not ok <eos>"}));
  const auto& a = spaces->responses().alphabet();
  VerifierRule rule;
  rule.class_labels = {{*a.find("ok")}, {*a.find("not"), *a.find("ok")}};
  rule.label_map = {0};
  EXPECT_EQ(robust_decode(spaces->responses().at(0), rule), 0u);
  // "not ok" and "ok" both end at the last token; the later start wins.
  EXPECT_EQ(robust_decode(spaces->responses().at(1), rule), 0u);
}

TEST(Scoring, UnparsedScoresMinusOne) {
  const Labels f = label_fixture();
  const ScoreTable robust = score_with_rule(f.rule, *f.spaces, true);
  EXPECT_EQ(robust.at(0, 3), 1.0);
  EXPECT_EQ(robust.at(0, 4), -1.0);
  EXPECT_FALSE(robust.parsed_at(0, 4));
  const ScoreTable strict = score_with_rule(f.rule, *f.spaces, false);
  EXPECT_EQ(strict.at(0, 3), -1.0);
  EXPECT_FALSE(strict.parsed_at(0, 3));
}

TEST(Transforms, IdentityAtDefaults) {
  CounterRng rng(1);
  for (int i = 0; i < 50; ++i) {
    const V row = random_distribution(rng, 7);
    EvalConfig cfg;
    cfg.temperature = 1.0;
    cfg.top_p = 1.0;
    const V out = transform_row(row, cfg);
    for (std::size_t k = 0; k < row.size(); ++k) EXPECT_NEAR(out[k], row[k], 1e-12);
  }
}

TEST(Transforms, TemperatureHandValue) {
  // p^(1/T) with T = 0.5 squares the row: (0.25, 0.75) -> (1/16, 9/16) / (10/16).
  const V out = apply_temperature(V{0.25, 0.75}, 0.5);
  EXPECT_NEAR(out[0], 0.1, 1e-15);
  EXPECT_NEAR(out[1], 0.9, 1e-15);
  const V sharp = apply_temperature(V{0.4, 0.6}, 1e-4);
  EXPECT_EQ(sharp[1], 1.0);
}

TEST(Transforms, TopPKeepsSmallestSufficientPrefix) {
  const V out = apply_top_p(V{0.1, 0.5, 0.15, 0.25}, 0.7);
  EXPECT_NEAR(out[1], 0.5 / 0.75, 1e-15);
  EXPECT_NEAR(out[3], 0.25 / 0.75, 1e-15);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[2], 0.0);
  // Exactly reaching the threshold stops there.
  const V exact = apply_top_p(V{0.5, 0.3, 0.2}, 0.8);
  EXPECT_EQ(exact[2], 0.0);
}

TEST(Transforms, OrderIsConfigurable) {
  const V row{0.5, 0.3, 0.2};
  EvalConfig after;
  after.temperature = 3.0;
  after.top_p = 0.75;
  EvalConfig before = after;
  before.top_p_after_temperature = false;
  // Raw, the top two hold 0.8 >= 0.75; flattened by T = 3 they hold only 0.715.
  EXPECT_GT(transform_row(row, after)[2], 0.0);
  EXPECT_EQ(transform_row(row, before)[2], 0.0);
}

TEST(Eval, AccuracyMapping) {
  EXPECT_NEAR(accuracy_from_mean_at_1(0.343), 0.6715, 1e-12);
  EXPECT_NEAR(accuracy_from_mean_at_1(0.385), 0.6925, 1e-12);
  EXPECT_EQ(accuracy_from_mean_at_1(1.0), 1.0);
}

TEST(Eval, DeterministicCorrectPolicyScoresOne) {
  const Task task = gen_synthetic_acceptability(SpacesConfig{}, 0.0, 3);
  const auto fit = exact_sft_fit(task.sft);
  const EvalResult e = eval_mean_at_1(fit, *task.rule, task.q, EvalConfig{}, 1);
  EXPECT_EQ(e.mean_at_1, 1.0);
  EXPECT_EQ(e.accuracy, 1.0);
  EXPECT_EQ(e.exact_mean, 1.0);
  EXPECT_EQ(e.parse_failures, 0u);
}

TEST(Eval, SampledMeanTracksExact) {
  SpacesConfig size;
  size.verbose_responses = true;
  const Task task = gen_synthetic_acceptability(size, 0.3, 4);
  CounterRng rng(4);
  const auto p = random_policy(rng, task.spaces);
  EvalConfig cfg;
  cfg.samples = 10000;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EvalResult e = eval_mean_at_1(p, *task.rule, task.q, cfg, seed);
    EXPECT_NEAR(e.mean_at_1, e.exact_mean, 0.02);
    EXPECT_NEAR(e.accuracy, (e.mean_at_1 + 1.0) / 2.0, 1e-12);
    EXPECT_GT(e.parse_failures, 0u);
  }
}

TEST(Synthetic, NoiselessDataIsOneHotOnGold) {
  const Task task = gen_synthetic_acceptability(SpacesConfig{}, 0.0, 5);
  const auto fit = exact_sft_fit(task.sft);
  for (std::size_t x = 0; x < task.spaces->num_prompts(); ++x) {
    const std::size_t gold = task.rule->label_map[x];
    EXPECT_EQ(fit.prob(x, gold), 1.0);
    EXPECT_EQ(task.reward.at(x, gold), 1.0);
  }
}

TEST(Synthetic, HalfNoiseIsUniformOnAverage) {
  SpacesConfig size;
  size.num_prompts = 4;
  double mass = 0.0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    const Task task = gen_synthetic_acceptability(size, 0.5, static_cast<std::uint64_t>(s));
    const auto fit = exact_sft_fit(task.sft);
    for (std::size_t x = 0; x < 4; ++x) mass += fit.prob(x, task.rule->label_map[x]);
  }
  EXPECT_NEAR(mass / (4.0 * seeds), 0.5, 0.02);
}

TEST(Synthetic, SameSeedSameBytes) {
  const Task a = gen_synthetic_acceptability(SpacesConfig{}, 0.3, 9);
  const Task b = gen_synthetic_acceptability(SpacesConfig{}, 0.3, 9);
  EXPECT_EQ(dataset_to_jsonl(a.sft), dataset_to_jsonl(b.sft));
  EXPECT_EQ(task_inputs_hash(a), task_inputs_hash(b));
  const Task c = gen_synthetic_acceptability(SpacesConfig{}, 0.3, 10);
  EXPECT_NE(task_inputs_hash(a), task_inputs_hash(c));
}

TEST(Config, RoundTripAndValidation) {
  ExperimentConfig cfg;
  cfg.pipeline = PipelineKind::kRlThenSft;
  cfg.rl.mode = RlStage::Mode::kGrpo;
  cfg.beta = 0.123456789;
  cfg.seeds = {3, 4};
  cfg.sweep.betas = {0.1, 1.0};
  const ExperimentConfig back = config_from_json(parse_json(config_to_json(cfg).dump()));
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));

  Json bad = config_to_json(cfg);
  bad["mystery"] = 1;
  EXPECT_THROW(config_from_json(bad), Error);
  cfg.beta = -1.0;
  EXPECT_THROW(validate(cfg), Error);
  cfg.beta = 1.0;
  cfg.eval.top_p = 0.0;
  EXPECT_THROW(validate(cfg), Error);
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // git hash-object --object-format=sha256 on an empty file.
  EXPECT_EQ(git_style_hash(""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
}

TEST(Experiment, RunIsByteIdentical) {
  ExperimentConfig cfg;
  cfg.seeds = {1, 2};
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const RunOutcome ra = run_experiment(cfg, a);
  const RunOutcome rb = run_experiment(cfg, b);
  EXPECT_EQ(ra.manifest_sha256, rb.manifest_sha256);
  for (const char* f : {"MANIFEST.json", "seed_1/curve.csv", "seed_1/report.json", "seed_2/curve.csv"}) {
    EXPECT_EQ(read_text_file(a / f), read_text_file(b / f)) << f;
  }
  EXPECT_EQ(read_text_file(a / "seed_1/curve.csv").substr(0, 37), "step,sft_test_loss,mean_at_1,accuracy");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, SftThenRlCurveShowsLossSpike) {
  const SeedRun run = run_seed(ExperimentConfig{}, 1);
  ASSERT_GT(run.curve.size(), run.stage1_end_step + 1);
  EXPECT_GT(run.curve.back().sft_test_loss, run.curve[run.stage1_end_step].sft_test_loss);
  for (const CurvePoint& p : run.curve) EXPECT_NEAR(p.accuracy, (p.mean_at_1 + 1.0) / 2.0, 1e-12);
}

TEST(Experiment, RlThenSftCurveShowsRewardDrop) {
  ExperimentConfig cfg;
  cfg.pipeline = PipelineKind::kRlThenSft;
  cfg.noise_rate = 0.3;
  const SeedRun run = run_seed(cfg, 1);
  EXPECT_LT(run.curve.back().mean_at_1, run.curve[run.stage1_end_step].mean_at_1);
  EXPECT_TRUE(run.report.reward_dropped);
}

TEST(Experiment, SweepRowsAndAggregate) {
  ExperimentConfig cfg;
  cfg.seeds = {1, 2, 3};
  cfg.sweep.betas = {0.1, 1.0};
  cfg.sweep.workers = 3;
  cfg.sft.steps = 20;
  const fs::path dir = scratch("sweep");
  const RunOutcome outcome = run_sweep(cfg, dir);
  EXPECT_TRUE(outcome.all_checks_hold);
  const std::string csv = read_text_file(dir / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3);
  EXPECT_EQ(aggregate_reports(dir, ReportFormat::kCsv), csv);
  const Json rows = parse_json(aggregate_reports(dir, ReportFormat::kJson));
  EXPECT_EQ(rows.size(), 6u);
  // Same grid, single worker: identical bytes.
  cfg.sweep.workers = 1;
  const fs::path serial = scratch("sweep_serial");
  EXPECT_EQ(run_sweep(cfg, serial).manifest_sha256, outcome.manifest_sha256);
  fs::remove_all(dir);
  fs::remove_all(serial);
}

TEST(Experiment, WriteTaskFiles) {
  const fs::path dir = scratch("gen");
  const Task task = gen_synthetic_acceptability(SpacesConfig{}, 0.3, 1);
  write_task_files(task, dir, ReportFormat::kJson);
  const SpacesPtr spaces = spaces_from_json(parse_json(read_text_file(dir / "spaces.json")));
  EXPECT_EQ(*spaces, *task.spaces);
  EXPECT_EQ(dataset_to_jsonl(dataset_from_jsonl(read_text_file(dir / "dataset.jsonl"), spaces)),
            dataset_to_jsonl(task.sft));
  write_task_files(task, dir, ReportFormat::kCsv);
  EXPECT_TRUE(fs::exists(dir / "dataset.csv"));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace coupling::harness
