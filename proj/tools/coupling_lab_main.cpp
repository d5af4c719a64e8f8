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

// coupling_lab: command-line front end over the C API.
//
//   coupling_lab gen    [--config c.json] [--seed N] [--out DIR] [--format csv|json]
//   coupling_lab run    [--config c.json] [--seed N] [--out DIR]
//   coupling_lab sweep  [--config c.json] [--seed N] [--out DIR]
//   coupling_lab check  [--seed N]
//   coupling_lab report [--out DIR] [--format csv|json]
//
// COUPLING_LAB_OUT, when set, replaces --out. Exit status: 0 success,
// 1 a bound check failed, 2 usage or input error, 3 internal error.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "coupling_lab/coupling_lab.h"

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
};

// Owns a char* handed out by the library.
struct LibString {
  char* ptr = nullptr;
  ~LibString() { cl_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

int exit_code(cl_status status) {
  switch (status) {
    case CL_OK: return 0;
    case CL_ERR_CHECK_FAILED: return kExitCheckFailed;
    case CL_ERR_INTERNAL: return kExitInternal;
    default: return kExitUsage;
  }
}

int report_failure(cl_status status) {
  std::cerr << "coupling_lab: " << cl_status_name(status) << ": " << cl_last_error() << "\n";
  return exit_code(status);
}

std::optional<std::string> read_config(const Options& opt) {
  if (opt.config_path.empty()) return std::string();
  std::ifstream in(opt.config_path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

// COUPLING_LAB_OUT beats --out; an empty result defers to the config.
const char* out_dir(const Options& opt) {
  if (const char* env = std::getenv("COUPLING_LAB_OUT"); env && *env) return env;
  return opt.out.empty() ? nullptr : opt.out.c_str();
}

cl_format format_of(const Options& opt) {
  return opt.format == "csv" ? CL_FORMAT_CSV : CL_FORMAT_JSON;
}

int cmd_gen(const Options& opt, const std::string& config) {
  const cl_status s =
      cl_generate_task(config.c_str(), opt.seed.value_or(1), out_dir(opt), format_of(opt));
  return s == CL_OK ? 0 : report_failure(s);
}

template <typename Run>
int cmd_run(const Options& opt, const std::string& config, Run run) {
  LibString sha, failing;
  const cl_status s = run(config.c_str(), opt.seed.has_value() ? 1 : 0, opt.seed.value_or(0),
                          out_dir(opt), &sha.ptr, &failing.ptr);
  if (s != CL_OK && s != CL_ERR_CHECK_FAILED) return report_failure(s);
  std::cout << "manifest_sha256 " << sha.str() << "\n";
  if (s == CL_ERR_CHECK_FAILED) {
    std::istringstream lines(failing.str());
    for (std::string line; std::getline(lines, line);) std::cerr << "failing check: " << line << "\n";
    return kExitCheckFailed;
  }
  return 0;
}

int cmd_check(const Options& opt) {
  LibString text;
  const cl_status s = cl_run_checks(opt.seed.value_or(1), &text.ptr);
  std::cout << text.str();
  if (s == CL_OK || s == CL_ERR_CHECK_FAILED) return exit_code(s);
  return report_failure(s);
}

int cmd_report(const Options& opt) {
  const char* dir = out_dir(opt);
  LibString text;
  const cl_status s = cl_aggregate_reports(dir ? dir : "out", format_of(opt), &text.ptr);
  if (s != CL_OK) return report_failure(s);
  std::cout << text.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for SFT/RL stage coupling"};
  app.require_subcommand(1);
  Options opt;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "ExperimentConfig JSON file")->check(CLI::ExistingFile);
  };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", opt.seed, "seed override"); };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", opt.out, "output directory"); };
  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", opt.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  };

  CLI::App* gen = app.add_subcommand("gen", "synthesize a task (spaces, reward, SFT data)");
  add_config(gen); add_seed(gen); add_out(gen); add_format(gen);
  CLI::App* run = app.add_subcommand("run", "run one experiment");
  add_config(run); add_seed(run); add_out(run);
  CLI::App* sweep = app.add_subcommand("sweep", "grid over beta, noise rate and seeds");
  add_config(sweep); add_seed(sweep); add_out(sweep);
  CLI::App* check = app.add_subcommand("check", "run the invariant suite");
  add_seed(check);
  CLI::App* report = app.add_subcommand("report", "aggregate report.json files");
  add_out(report); add_format(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (check->parsed()) return cmd_check(opt);
  if (report->parsed()) return cmd_report(opt);

  const std::optional<std::string> config = read_config(opt);
  if (!config) {
    std::cerr << "coupling_lab: cannot read " << opt.config_path << "\n";
    return kExitUsage;
  }
  if (gen->parsed()) return cmd_gen(opt, *config);
  if (run->parsed()) return cmd_run(opt, *config, cl_run_experiment);
  return cmd_run(opt, *config, cl_run_sweep);
}
