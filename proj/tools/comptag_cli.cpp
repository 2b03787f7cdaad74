// comptag command-line driver. Talks to the library only through comptag.h.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "comptag/comptag.h"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::string provider;
  std::string source;
  std::optional<std::size_t> k;
  std::optional<double> tau;
};

int report_error(ct_status s) {
  std::cerr << "comptag: " << ct_status_name(s) << ": " << ct_last_error() << "\n";
  return static_cast<int>(s);
}

std::string overrides(const Common& c) {
  nlohmann::json j = nlohmann::json::object();
  if (c.seed) j["seed"] = *c.seed;
  if (!c.out.empty()) j["paths"]["out"] = c.out;
  if (!c.mode.empty()) j["tagger"]["mode"] = c.mode;
  if (!c.provider.empty()) j["tagger"]["provider"] = c.provider;
  if (!c.source.empty()) j["eval"]["source"] = c.source;
  if (c.k) j["retrieval"]["k"] = *c.k;
  if (c.tau) j["aggregate"]["tau"] = *c.tau;
  return j.dump();
}

int run_stages(const Common& c, const std::vector<ct_stage>& stages) {
  ct_pipeline* p = nullptr;
  const auto ov = overrides(c);
  if (auto s = ct_pipeline_create(c.config.empty() ? nullptr : c.config.c_str(), ov.c_str(), &p);
      s != CT_OK) {
    return report_error(s);
  }
  int rc = 0;
  for (auto stage : stages) {
    char* report = nullptr;
    if (auto s = ct_pipeline_run(p, stage, &report); s != CT_OK) {
      rc = report_error(s);
      break;
    }
    std::cout << nlohmann::json::parse(report).dump(2) << "\n";
    ct_string_free(report);
  }
  ct_pipeline_free(p);
  return rc;
}

void add_common(CLI::App* cmd, Common& c, bool stage_options) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "Random seed (folds)");
  cmd->add_option("--out", c.out, "Artifact directory");
  if (!stage_options) return;
  cmd->add_option("--mode", c.mode, "Tagging mode: constrained, zero_shot, few_shot");
  cmd->add_option("--provider", c.provider, "Tagging backend: mock, http, replay");
  cmd->add_option("--k", c.k, "Candidate count K");
  cmd->add_option("--tau", c.tau, "Threshold tau");
  cmd->add_option("--source", c.source, "Evaluate 'pipeline' output or the 'ranking'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Competency tagging pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ct_version()));

  Common common;
  struct Cmd {
    const char* name;
    const char* help;
    std::vector<ct_stage> stages;
  };
  const std::vector<Cmd> cmds{
      {"ingest", "Validate and normalize the corpus", {CT_STAGE_INGEST}},
      {"fragment", "Cut resources into fragments", {CT_STAGE_FRAGMENT}},
      {"retrieve", "Rank candidate competencies per fragment", {CT_STAGE_RETRIEVE}},
      {"tag", "Tag fragments with a language model", {CT_STAGE_TAG}},
      {"reconcile", "Apply graph-aware reconciliation", {CT_STAGE_RECONCILE}},
      {"aggregate", "Aggregate fragment predictions per resource", {CT_STAGE_AGGREGATE}},
      {"evaluate", "Score predictions against gold", {CT_STAGE_EVALUATE}},
      {"sweep", "Cross-validated (K, tau) grid", {CT_STAGE_SWEEP}},
      {"run", "ingest through evaluate",
       {CT_STAGE_INGEST, CT_STAGE_FRAGMENT, CT_STAGE_RETRIEVE, CT_STAGE_TAG, CT_STAGE_RECONCILE,
        CT_STAGE_AGGREGATE, CT_STAGE_EVALUATE}},
  };
  std::vector<std::pair<CLI::App*, const Cmd*>> registered;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, common, true);
    registered.emplace_back(sub, &c);
  }

  std::string fixture_out;
  std::uint64_t fixture_seed = 7;
  auto* gen = app.add_subcommand("gen-fixture", "Write the synthetic dataset");
  gen->add_option("--out", fixture_out, "Output directory")->required();
  gen->add_option("--seed", fixture_seed, "Generator seed");
  gen->add_option("--config", common.config, "Ignored; accepted for symmetry");

  CLI11_PARSE(app, argc, argv);

  if (*gen) {
    if (auto s = ct_generate_fixture(fixture_out.c_str(), fixture_seed); s != CT_OK) {
      return report_error(s);
    }
    std::cout << "wrote fixture to " << fixture_out << " (seed " << fixture_seed << ")\n";
    return 0;
  }
  for (const auto& [sub, cmd] : registered) {
    if (*sub) return run_stages(common, cmd->stages);
  }
  return 1;
}
