#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latentadv/errors.hpp"
#include "latentadv/harness.hpp"

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> out;
  std::optional<long long> seed;
  std::optional<std::string> source;
  std::optional<int> traces;
  std::optional<std::string> classifier;
  std::optional<int> max_len;
  std::optional<std::string> methods;
  std::optional<long long> max_prefixes;
  std::optional<int> threads;
};

void add_run_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("-c,--config", f.config, "Config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.sets, "Override, e.g. --set vae.epochs=40 (repeatable)");
  cmd->add_option("-o,--out", f.out, "Output directory (run.output)");
  cmd->add_option("--seed", f.seed, "Global seed (run.seed)");
  cmd->add_option("--source", f.source, "Event log CSV or 'synthetic' (data.source)");
  cmd->add_option("--traces", f.traces, "Synthetic trace count (data.synthetic_traces)");
  cmd->add_option("--classifier", f.classifier, "linear, bagged_trees, boosted_trees or recurrent (classifier.kind)");
  cmd->add_option("--max-len", f.max_len, "Longest prefix (prefix.max_len)");
  cmd->add_option("--methods", f.methods, "Comma-separated attack methods (attack.methods)");
  cmd->add_option("--max-prefixes", f.max_prefixes, "Cap on attacked prefixes per method (attack.max_prefixes)");
  cmd->add_option("--threads", f.threads, "Attack worker threads (attack.threads)");
}

latentadv::RunConfig build_config(const Flags& f) {
  latentadv::Config c = f.config.empty() ? latentadv::Config() : latentadv::Config::parse_file(f.config);
  for (const auto& s : f.sets) c.set_override(s);
  if (f.out) c.set("run.output", *f.out);
  if (f.seed) c.set("run.seed", std::to_string(*f.seed));
  if (f.source) c.set("data.source", *f.source);
  if (f.traces) c.set("data.synthetic_traces", std::to_string(*f.traces));
  if (f.classifier) c.set("classifier.kind", *f.classifier);
  if (f.max_len) c.set("prefix.max_len", std::to_string(*f.max_len));
  if (f.methods) c.set("attack.methods", *f.methods);
  if (f.max_prefixes) c.set("attack.max_prefixes", std::to_string(*f.max_prefixes));
  if (f.threads) c.set("attack.threads", std::to_string(*f.threads));
  auto cfg = latentadv::RunConfig::from_config(c);
  cfg.validate();
  return cfg;
}

void print_manifest(const latentadv::RunConfig& cfg, const latentadv::RunManifest& m) {
  std::cout << "output: " << cfg.resolved_output().string() << "\n";
  for (const auto& s : m.stages) std::cout << "  " << s.name << ": " << s.status << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space adversarial attacks on outcome-prediction models"};
  app.set_version_flag("--version", latentadv::kVersion);
  app.require_subcommand(1);

  Flags flags;
  std::string synth_out;
  int synth_traces = 500;
  long long synth_seed = 7;
  auto* synth = app.add_subcommand("synth", "Write a synthetic class-pattern event log");
  synth->add_option("-o,--out", synth_out, "CSV path")->required();
  synth->add_option("--traces", synth_traces, "Number of traces")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Seed")->check(CLI::NonNegativeNumber);

  struct Sub {
    const char* name;
    const char* help;
    std::vector<std::string> stages;
  };
  const std::vector<Sub> subs = {
      {"ingest", "Read the event log into the output directory", {latentadv::stages::kIngest}},
      {"train", "Split, then train the classifier and the class manifolds",
       {latentadv::stages::kSplit, latentadv::stages::kTrain}},
      {"attack", "Generate adversarial examples for the test prefixes", {latentadv::stages::kAttack}},
      {"evaluate", "Compute the distance panel", {latentadv::stages::kEvaluate}},
      {"profile", "Assign cluster profiles", {latentadv::stages::kProfile}},
      {"report", "Write the summary tables", {latentadv::stages::kReport}},
      {"run", "Run every stage", {}},
  };
  std::vector<CLI::App*> commands;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_run_flags(cmd, flags);
    commands.push_back(cmd);
  }

  CLI11_PARSE(app, argc, argv);

  std::string current = "config";
  try {
    if (synth->parsed()) {
      latentadv::write_synthetic_log(synth_out, synth_traces, static_cast<std::uint64_t>(synth_seed));
      std::cout << "wrote " << synth_out << "\n";
      return 0;
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!commands[i]->parsed()) continue;
      const auto cfg = build_config(flags);
      if (subs[i].stages.empty()) {
        current = "run";
        print_manifest(cfg, latentadv::run_pipeline(cfg));
        return 0;
      }
      latentadv::RunManifest m;
      for (const auto& stage : subs[i].stages) {
        current = stage;
        m = latentadv::stages::run(cfg, stage);
      }
      print_manifest(cfg, m);
      return 0;
    }
  } catch (const latentadv::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: stage '" << current << "' failed: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
