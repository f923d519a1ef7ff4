#include "latentadv/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "latentadv/csv.hpp"
#include "latentadv/errors.hpp"

namespace latentadv {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------------ config

RunConfig::RunConfig() {
  // Desk-scale VAE settings: a small KL weight with warm-up keeps the latent
  // code informative on short synthetic logs.
  vae.kl_weight = 0.05;
  vae.kl_warmup_epochs = 30;
  vae.max_len = max_len;
  attacks = all_attack_methods();
}

namespace {

AttackConfig parse_method(const std::string& name, const AttackConfig& base) {
  AttackConfig c = base;
  if (name == "latent_sampling") {
    c.strategy = Strategy::kLatentSampled;
    return c;
  }
  if (name == "gradient_steps") {
    c.strategy = Strategy::kGradientBased;
    return c;
  }
  std::string rest;
  if (name.rfind("regular_", 0) == 0) {
    c.strategy = Strategy::kRegular;
    rest = name.substr(8);
  } else if (name.rfind("projected_", 0) == 0) {
    c.strategy = Strategy::kProjected;
    rest = name.substr(10);
  } else {
    throw ConfigError("unknown attack method '" + name + "'");
  }
  if (rest == "last_event") {
    c.attack_type = AttackType::kLastEvent;
  } else if (rest == "all_event") {
    c.attack_type = AttackType::kAllEvent;
  } else if (rest == "k_event") {
    c.attack_type = AttackType::kKEvent;
  } else if (rest.size() > 6 && rest.substr(rest.size() - 6) == "_event") {
    const std::string k = rest.substr(0, rest.size() - 6);
    int value = 0;
    auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), value);
    if (ec != std::errc() || ptr != k.data() + k.size() || value < 1) {
      throw ConfigError("unknown attack method '" + name + "'");
    }
    c.attack_type = AttackType::kKEvent;
    c.k_events = value;
  } else {
    throw ConfigError("unknown attack method '" + name + "'");
  }
  return c;
}

TimeFormat parse_time_format(const std::string& s) {
  if (s == "ticks") return TimeFormat::kTicks;
  if (s == "iso8601" || s == "iso") return TimeFormat::kIso8601;
  throw ConfigError("data.time_format must be ticks or iso8601, got '" + s + "'");
}

std::string time_format_name(TimeFormat f) { return f == TimeFormat::kTicks ? "ticks" : "iso8601"; }

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<std::string> RunConfig::known_keys() {
  return {"data.source",           "data.synthetic_traces",   "data.case_column",
          "data.activity_column",  "data.timestamp_column",   "data.label_column",
          "data.time_format",      "data.label_values",       "split.train_fraction",
          "split.validation_fraction", "prefix.min_len",      "prefix.max_len",
          "prefix.dedup",          "prefix.remove_ambiguous", "prefix.dedup_test",
          "classifier.kind",       "classifier.grid_search",  "classifier.linear_l2",
          "classifier.forest_trees", "classifier.forest_max_depth", "classifier.boost_rounds",
          "classifier.boost_max_depth", "classifier.boost_learning_rate", "classifier.hidden_size",
          "classifier.embedding_dim", "classifier.epochs",    "classifier.learning_rate",
          "classifier.batch_size", "vae.latent_dim",          "vae.hidden_size",
          "vae.epochs",            "vae.learning_rate",       "vae.kl_weight",
          "vae.kl_warmup_epochs",  "vae.batch_size",          "attack.methods",
          "attack.nr_adv",         "attack.k_events",         "attack.max_iters",
          "attack.step_size",      "attack.lambda_dist",      "attack.max_prefixes",
          "attack.threads",        "run.seed",                "run.output"};
}

RunConfig RunConfig::from_config(const Config& c) {
  c.reject_unknown(known_keys());
  RunConfig r;
  r.source = c.get_string("data.source", r.source);
  r.synthetic_traces = static_cast<int>(c.get_int("data.synthetic_traces", r.synthetic_traces));
  r.mapping.case_column = c.get_string("data.case_column", r.mapping.case_column);
  r.mapping.activity_column = c.get_string("data.activity_column", r.mapping.activity_column);
  r.mapping.timestamp_column = c.get_string("data.timestamp_column", r.mapping.timestamp_column);
  r.mapping.label_column = c.get_string("data.label_column", r.mapping.label_column);
  r.mapping.time_format = parse_time_format(c.get_string("data.time_format", "ticks"));
  if (c.has("data.label_values")) {
    r.mapping.label_values.clear();
    for (const auto& item : c.get_list("data.label_values", {})) {
      const auto eq = item.rfind('=');
      if (eq == std::string::npos) throw ConfigError("data.label_values entries must look like value=0|1");
      const std::string label = item.substr(eq + 1);
      if (label != "0" && label != "1") throw ConfigError("data.label_values must map onto 0 or 1");
      r.mapping.label_values[item.substr(0, eq)] = label == "1" ? 1 : 0;
    }
  }

  r.train_fraction = c.get_float("split.train_fraction", r.train_fraction);
  r.validation_fraction = c.get_float("split.validation_fraction", r.validation_fraction);

  r.min_len = static_cast<int>(c.get_int("prefix.min_len", r.min_len));
  r.max_len = static_cast<int>(c.get_int("prefix.max_len", r.max_len));
  r.dedup = c.get_bool("prefix.dedup", r.dedup);
  r.remove_ambiguous = c.get_bool("prefix.remove_ambiguous", r.remove_ambiguous);
  r.dedup_test = c.get_bool("prefix.dedup_test", r.dedup_test);

  r.classifier = parse_classifier_kind(c.get_string("classifier.kind", to_string(r.classifier)));
  r.grid_search = c.get_bool("classifier.grid_search", r.grid_search);
  auto& hp = r.hyperparams;
  hp.linear.l2 = c.get_float("classifier.linear_l2", hp.linear.l2);
  hp.forest.trees = static_cast<int>(c.get_int("classifier.forest_trees", hp.forest.trees));
  hp.forest.max_depth = static_cast<int>(c.get_int("classifier.forest_max_depth", hp.forest.max_depth));
  hp.boost.rounds = static_cast<int>(c.get_int("classifier.boost_rounds", hp.boost.rounds));
  hp.boost.max_depth = static_cast<int>(c.get_int("classifier.boost_max_depth", hp.boost.max_depth));
  hp.boost.learning_rate = c.get_float("classifier.boost_learning_rate", hp.boost.learning_rate);
  hp.recurrent.hidden_size = static_cast<int>(c.get_int("classifier.hidden_size", hp.recurrent.hidden_size));
  hp.recurrent.embedding_dim = static_cast<int>(c.get_int("classifier.embedding_dim", hp.recurrent.embedding_dim));
  hp.recurrent.epochs = static_cast<int>(c.get_int("classifier.epochs", hp.recurrent.epochs));
  hp.recurrent.learning_rate = c.get_float("classifier.learning_rate", hp.recurrent.learning_rate);
  hp.recurrent.batch_size = static_cast<int>(c.get_int("classifier.batch_size", hp.recurrent.batch_size));

  r.vae.latent_dim = static_cast<int>(c.get_int("vae.latent_dim", r.vae.latent_dim));
  r.vae.hidden_size = static_cast<int>(c.get_int("vae.hidden_size", r.vae.hidden_size));
  r.vae.epochs = static_cast<int>(c.get_int("vae.epochs", r.vae.epochs));
  r.vae.learning_rate = c.get_float("vae.learning_rate", r.vae.learning_rate);
  r.vae.kl_weight = c.get_float("vae.kl_weight", r.vae.kl_weight);
  r.vae.kl_warmup_epochs = static_cast<int>(c.get_int("vae.kl_warmup_epochs", r.vae.kl_warmup_epochs));
  r.vae.batch_size = static_cast<int>(c.get_int("vae.batch_size", r.vae.batch_size));
  r.vae.max_len = r.max_len;

  AttackConfig base;
  base.nr_adv = static_cast<int>(c.get_int("attack.nr_adv", base.nr_adv));
  base.k_events = static_cast<int>(c.get_int("attack.k_events", base.k_events));
  base.max_iters = static_cast<int>(c.get_int("attack.max_iters", base.max_iters));
  base.step_size = c.get_float("attack.step_size", base.step_size);
  base.lambda_dist = c.get_float("attack.lambda_dist", base.lambda_dist);
  std::vector<std::string> names;
  for (const auto& a : all_attack_methods()) names.push_back(a.name());
  r.attacks.clear();
  for (const auto& name : c.get_list("attack.methods", names)) r.attacks.push_back(parse_method(name, base));
  const long long cap = c.get_int("attack.max_prefixes", 0);
  if (cap < 0) throw ConfigError("attack.max_prefixes must be non-negative");
  r.max_prefixes = static_cast<std::size_t>(cap);
  r.threads = static_cast<int>(c.get_int("attack.threads", r.threads));

  const long long seed = c.get_int("run.seed", static_cast<long long>(r.seed));
  if (seed < 0) throw ConfigError("run.seed must be non-negative");
  r.seed = static_cast<std::uint64_t>(seed);
  r.output_dir = c.get_string("run.output", r.output_dir);
  return r;
}

void RunConfig::validate() const {
  if (source != "synthetic" && !fs::exists(source)) throw ConfigError("data.source '" + source + "' does not exist");
  if (source == "synthetic" && synthetic_traces < 2) throw ConfigError("data.synthetic_traces must be at least 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split.train_fraction must lie in (0, 1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("split.validation_fraction must lie in [0, 1)");
  }
  if (min_len < 1 || max_len < min_len) throw ConfigError("prefix lengths need 1 <= min_len <= max_len");
  if (attacks.empty()) throw ConfigError("attack.methods is empty");
  if (threads < 1) throw ConfigError("attack.threads must be at least 1");
  for (const auto& a : attacks) {
    a.validate();
    if (a.strategy == Strategy::kGradientBased && classifier != ClassifierKind::kRecurrent) {
      throw ConfigError("gradient_steps needs a recurrent classifier; " + to_string(classifier) +
                        " is not differentiable");
    }
  }
  VaeConfig v = vae;
  v.max_len = max_len;
  if (v.hidden_size < 1 || v.epochs < 1 || v.batch_size < 1 || v.latent_dim < 1 || !(v.learning_rate > 0.0) ||
      v.kl_weight < 0.0 || v.kl_warmup_epochs < 0) {
    throw ConfigError("invalid VAE settings");
  }
  if (hyperparams.recurrent.epochs < 1 || hyperparams.recurrent.hidden_size < 1 ||
      hyperparams.recurrent.batch_size < 1 || hyperparams.forest.trees < 1 || hyperparams.boost.rounds < 0) {
    throw ConfigError("invalid classifier settings");
  }
}

std::string RunConfig::canonical() const {
  std::ostringstream o;
  o << "data.source=" << source << "\n";
  o << "data.synthetic_traces=" << synthetic_traces << "\n";
  o << "data.columns=" << mapping.case_column << "," << mapping.activity_column << "," << mapping.timestamp_column
    << "," << mapping.label_column << "\n";
  o << "data.time_format=" << time_format_name(mapping.time_format) << "\n";
  o << "data.label_values=";
  for (const auto& [k, v] : mapping.label_values) o << k << "=" << v << ";";
  o << "\n";
  o << "split=" << fmt_double(train_fraction) << "," << fmt_double(validation_fraction) << "\n";
  o << "prefix=" << min_len << "," << max_len << "," << dedup << "," << remove_ambiguous << "," << dedup_test << "\n";
  const auto& hp = hyperparams;
  o << "classifier=" << to_string(classifier) << ",grid=" << grid_search << "\n";
  o << "classifier.linear=" << fmt_double(hp.linear.l2) << "," << hp.linear.max_iter << "\n";
  o << "classifier.forest=" << hp.forest.trees << "," << hp.forest.max_depth << "," << hp.forest.min_leaf << ","
    << hp.forest.max_features << "\n";
  o << "classifier.boost=" << hp.boost.rounds << "," << hp.boost.max_depth << "," << fmt_double(hp.boost.learning_rate)
    << "," << fmt_double(hp.boost.lambda) << "\n";
  o << "classifier.recurrent=" << hp.recurrent.hidden_size << "," << hp.recurrent.embedding_dim << ","
    << hp.recurrent.epochs << "," << fmt_double(hp.recurrent.learning_rate) << "," << hp.recurrent.batch_size << "\n";
  o << "vae=" << vae.latent_dim << "," << vae.hidden_size << "," << vae.epochs << "," << fmt_double(vae.learning_rate)
    << "," << fmt_double(vae.kl_weight) << "," << vae.kl_warmup_epochs << "," << vae.batch_size << "\n";
  for (const auto& a : attacks) {
    o << "attack=" << a.name() << "," << a.nr_adv << "," << a.k_events << "," << a.max_iters << ","
      << fmt_double(a.step_size) << "," << fmt_double(a.lambda_dist) << "\n";
  }
  o << "attack.max_prefixes=" << max_prefixes << "\n";
  o << "seed=" << seed << "\n";
  return o.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical()); }

fs::path RunConfig::resolved_output() const {
  fs::path out(output_dir);
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0' && out.is_relative()) {
    return fs::path(root) / out;
  }
  return out;
}

std::uint64_t RunConfig::stream_seed(const char* name) const { return Rng::derive(seed, name).next(); }

// ------------------------------------------------------------------ tables

namespace {

const std::vector<std::string> kResultColumns = {
    "attack",   "strategy",        "case",    "prefix_length",  "label",      "status",   "original",
    "adversarial", "original_prob", "adversarial_prob", "flipped", "latent_distance", "candidate_count",
    "message",  "l1",              "l2",      "emd",            "dl_edit",    "lcp",      "adv_length",
    "dl_norm",  "emd_norm",        "profile"};

std::string seq_to_json(const ActivitySequence& s) { return json(s).dump(); }

ActivitySequence seq_from_json(const std::string& text) {
  try {
    return json::parse(text).get<ActivitySequence>();
  } catch (const json::exception& e) {
    throw ArtifactError("malformed activity list '" + text + "'");
  }
}

double parse_double(const std::string& s, const char* what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ArtifactError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

long long parse_long(const std::string& s, const char* what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ArtifactError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

std::map<std::string, std::size_t> header_index(const csv::Row& header, const std::vector<std::string>& required) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < header.size(); ++i) idx[header[i]] = i;
  for (const auto& r : required) {
    if (!idx.contains(r)) throw ArtifactError("table is missing column '" + r + "'");
  }
  return idx;
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  csv::write_row(out, kResultColumns);
  for (const auto& row : rows) {
    const auto& r = row.result;
    csv::Row cells = {r.attack,
                      to_string(r.strategy),
                      r.case_id,
                      std::to_string(r.prefix_length),
                      std::to_string(r.label),
                      to_string(r.status),
                      seq_to_json(r.original),
                      r.status == AttackStatus::kOk ? seq_to_json(r.adversarial) : "",
                      fmt_double(r.original_prob),
                      r.status == AttackStatus::kOk ? fmt_double(r.adversarial_prob) : "",
                      r.flipped ? "1" : "0",
                      r.status == AttackStatus::kOk ? fmt_double(r.latent_distance) : "",
                      std::to_string(r.candidate_count),
                      r.message};
    if (row.panel) {
      const auto& p = *row.panel;
      cells.insert(cells.end(), {fmt_double(p.l1), fmt_double(p.l2), fmt_double(p.emd), std::to_string(p.dl_edit),
                                 std::to_string(p.lcp), std::to_string(row.adversarial_length)});
    } else {
      cells.insert(cells.end(), 6, "");
    }
    if (row.normalized) {
      cells.push_back(fmt_double(row.normalized->dl_norm));
      cells.push_back(fmt_double(row.normalized->emd_norm));
    } else {
      cells.insert(cells.end(), 2, "");
    }
    cells.push_back(row.profile ? to_string(*row.profile) : "");
    csv::write_row(out, cells);
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::Row header;
  if (!reader.next(header)) throw ArtifactError("result table is empty");
  const auto idx = header_index(header, kResultColumns);
  auto get = [&](const csv::Row& row, const char* col) -> const std::string& {
    const auto i = idx.at(col);
    if (i >= row.size()) throw ArtifactError("result row at line " + std::to_string(reader.line()) + " is short");
    return row[i];
  };
  std::vector<ResultRow> out;
  csv::Row row;
  while (reader.next(row)) {
    ResultRow rr;
    auto& r = rr.result;
    r.attack = get(row, "attack");
    try {
      r.strategy = parse_strategy(get(row, "strategy"));
    } catch (const ConfigError& e) {
      throw ArtifactError(e.what());
    }
    r.case_id = get(row, "case");
    r.prefix_length = static_cast<int>(parse_long(get(row, "prefix_length"), "prefix_length"));
    r.label = static_cast<int>(parse_long(get(row, "label"), "label"));
    r.status = parse_attack_status(get(row, "status"));
    r.original = seq_from_json(get(row, "original"));
    r.original_prob = parse_double(get(row, "original_prob"), "original_prob");
    r.flipped = get(row, "flipped") == "1";
    r.candidate_count = static_cast<int>(parse_long(get(row, "candidate_count"), "candidate_count"));
    r.message = get(row, "message");
    if (r.status == AttackStatus::kOk) {
      r.adversarial = seq_from_json(get(row, "adversarial"));
      r.adversarial_prob = parse_double(get(row, "adversarial_prob"), "adversarial_prob");
      r.latent_distance = parse_double(get(row, "latent_distance"), "latent_distance");
    }
    if (!get(row, "dl_edit").empty()) {
      MetricPanel p;
      p.latent_euclidean = r.latent_distance;
      p.l1 = parse_double(get(row, "l1"), "l1");
      p.l2 = parse_double(get(row, "l2"), "l2");
      p.emd = parse_double(get(row, "emd"), "emd");
      p.dl_edit = static_cast<int>(parse_long(get(row, "dl_edit"), "dl_edit"));
      p.lcp = static_cast<int>(parse_long(get(row, "lcp"), "lcp"));
      rr.panel = p;
      rr.adversarial_length = static_cast<int>(parse_long(get(row, "adv_length"), "adv_length"));
    }
    if (!get(row, "dl_norm").empty()) {
      rr.normalized = NormalizedAttackMetrics{parse_double(get(row, "dl_norm"), "dl_norm"),
                                              parse_double(get(row, "emd_norm"), "emd_norm"), r.flipped};
    }
    if (!get(row, "profile").empty()) {
      try {
        rr.profile = parse_profile(get(row, "profile"));
      } catch (const ProfilingError& e) {
        throw ArtifactError(e.what());
      }
    }
    out.push_back(std::move(rr));
  }
  return out;
}

void write_prefixes_csv(std::ostream& out, const std::vector<Prefix>& prefixes) {
  csv::write_row(out, {"case", "length", "label", "activities", "timestamps"});
  for (const auto& p : prefixes) {
    std::vector<std::int64_t> ts;
    for (const auto& e : p.events) ts.push_back(e.timestamp);
    csv::write_row(out, {p.case_id, std::to_string(p.length()), std::to_string(p.label), seq_to_json(p.activities()),
                         json(ts).dump()});
  }
}

std::vector<Prefix> read_prefixes_csv(std::istream& in) {
  csv::Reader reader(in);
  csv::Row header;
  if (!reader.next(header)) throw ArtifactError("prefix table is empty");
  const auto idx = header_index(header, {"case", "length", "label", "activities", "timestamps"});
  std::vector<Prefix> out;
  csv::Row row;
  while (reader.next(row)) {
    if (row.size() < header.size()) throw ArtifactError("prefix row at line " + std::to_string(reader.line()) + " is short");
    Prefix p;
    p.case_id = row[idx.at("case")];
    p.label = static_cast<int>(parse_long(row[idx.at("label")], "label"));
    const auto acts = seq_from_json(row[idx.at("activities")]);
    std::vector<std::int64_t> ts;
    try {
      ts = json::parse(row[idx.at("timestamps")]).get<std::vector<std::int64_t>>();
    } catch (const json::exception&) {
      throw ArtifactError("malformed timestamps at line " + std::to_string(reader.line()));
    }
    if (ts.size() != acts.size() || static_cast<long long>(acts.size()) != parse_long(row[idx.at("length")], "length")) {
      throw ArtifactError("inconsistent prefix at line " + std::to_string(reader.line()));
    }
    for (std::size_t i = 0; i < acts.size(); ++i) {
      p.events.push_back(Event{p.case_id, acts[i], ts[i], static_cast<int>(i) + 1});
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ------------------------------------------------------------------ report

namespace {

std::string fmt_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<fs::path> emit_report(const std::vector<ResultRow>& rows, const std::string& classifier,
                                  const fs::path& dir) {
  if (rows.empty()) throw ReportError("no results to report");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ResultRow*>> by_attack;
  for (const auto& r : rows) {
    if (!by_attack.contains(r.result.attack)) order.push_back(r.result.attack);
    by_attack[r.result.attack].push_back(&r);
  }
  fs::create_directories(dir);
  std::vector<fs::path> written;

  {
    const fs::path path = dir / "summary.csv";
    std::ofstream out(path, std::ios::binary);
    csv::write_row(out, {"classifier", "attack", "strategy", "rows", "attacked", "flipped", "success_rate",
                         "mean_latent_euclidean", "mean_l1", "mean_l2", "mean_emd", "mean_dl_edit", "mean_lcp",
                         "mean_adv_length"});
    for (const auto& name : order) {
      const auto& group = by_attack[name];
      std::vector<AdversarialResult> results;
      double sums[7] = {0, 0, 0, 0, 0, 0, 0};
      std::size_t attacked = 0, flipped = 0;
      for (const auto* r : group) {
        results.push_back(r->result);
        flipped += r->result.flipped ? 1 : 0;
        if (r->result.status != AttackStatus::kOk || !r->panel) continue;
        ++attacked;
        const auto& p = *r->panel;
        const double vals[7] = {p.latent_euclidean, p.l1, p.l2, p.emd, static_cast<double>(p.dl_edit),
                                static_cast<double>(p.lcp), static_cast<double>(r->adversarial_length)};
        for (int k = 0; k < 7; ++k) sums[k] += vals[k];
      }
      csv::Row cells = {classifier, name, to_string(group.front()->result.strategy), std::to_string(group.size()),
                        std::to_string(attacked), std::to_string(flipped), fmt_fixed(success_rate(results))};
      for (double s : sums) cells.push_back(attacked > 0 ? fmt_fixed(s / static_cast<double>(attacked)) : "");
      csv::write_row(out, cells);
    }
    written.push_back(path);
  }

  {
    const fs::path path = dir / "success_by_length.csv";
    std::ofstream out(path, std::ios::binary);
    csv::write_row(out, {"classifier", "attack", "prefix_length", "rows", "flipped", "success_rate",
                         "normalized_frequency"});
    for (const auto& name : order) {
      std::map<int, std::pair<std::size_t, std::size_t>> per_len;
      std::size_t total_flipped = 0;
      for (const auto* r : by_attack[name]) {
        auto& [n, f] = per_len[r->result.prefix_length];
        ++n;
        if (r->result.flipped) {
          ++f;
          ++total_flipped;
        }
      }
      for (const auto& [len, nf] : per_len) {
        const double freq = total_flipped > 0 ? static_cast<double>(nf.second) / static_cast<double>(total_flipped) : 0.0;
        csv::write_row(out, {classifier, name, std::to_string(len), std::to_string(nf.first), std::to_string(nf.second),
                             fmt_fixed(static_cast<double>(nf.second) / static_cast<double>(nf.first)), fmt_fixed(freq)});
      }
    }
    written.push_back(path);
  }

  {
    const fs::path path = dir / "profile_counts.csv";
    std::ofstream out(path, std::ios::binary);
    csv::write_row(out, {"classifier", "profile", "attack", "count", "flipped", "success_rate"});
    for (auto profile : all_profiles()) {
      for (const auto& name : order) {
        std::size_t count = 0, flipped = 0;
        for (const auto* r : by_attack[name]) {
          if (r->profile && *r->profile == profile) {
            ++count;
            flipped += r->result.flipped ? 1 : 0;
          }
        }
        csv::write_row(out, {classifier, to_string(profile), name, std::to_string(count), std::to_string(flipped),
                             count > 0 ? fmt_fixed(static_cast<double>(flipped) / static_cast<double>(count)) : ""});
      }
    }
    written.push_back(path);
  }
  return written;
}

// ------------------------------------------------------------------ manifest

std::string RunManifest::to_json() const {
  json j;
  j["format"] = "latentadv.manifest";
  j["version"] = version;
  j["config_hash"] = config_hash;
  json st = json::array();
  for (const auto& s : stages) {
    st.push_back({{"name", s.name}, {"started", s.started}, {"finished", s.finished}, {"status", s.status},
                  {"message", s.message}});
  }
  j["stages"] = st;
  json art = json::object();
  for (const auto& [k, v] : artifacts) art[k] = v;
  j["artifacts"] = art;
  j["failed_stage"] = failed_stage;
  return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& s : j.at("stages")) {
      m.stages.push_back({s.at("name").get<std::string>(), s.at("started").get<std::string>(),
                          s.at("finished").get<std::string>(), s.at("status").get<std::string>(),
                          s.at("message").get<std::string>()});
    }
    for (const auto& [k, v] : j.at("artifacts").items()) m.artifacts.emplace_back(k, v.get<std::string>());
    m.failed_stage = j.at("failed_stage").get<std::string>();
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

// ------------------------------------------------------------------ stages

namespace {

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  return format_timestamp(ms, TimeFormat::kIso8601);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("missing artifact '" + path.string() + "'; run the earlier stages first");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ArtifactError("cannot write '" + path.string() + "'");
    out << text;
  }
  fs::rename(tmp, path);
}

template <typename Writer>
void write_with(const fs::path& path, Writer&& writer) {
  std::ostringstream ss;
  writer(ss);
  write_text(path, ss.str());
}

ColumnMapping canonical_mapping(const RunConfig& cfg) {
  ColumnMapping m;
  m.time_format = cfg.mapping.time_format;
  return m;
}

std::vector<Prefix> load_prefixes(const fs::path& path) {
  std::istringstream in(read_text(path));
  return read_prefixes_csv(in);
}

ActivityVocabulary load_vocabulary(const fs::path& dir) {
  try {
    const json j = json::parse(read_text(dir / "vocabulary.json"));
    ActivityVocabulary v(j.at("activities").get<std::vector<std::string>>());
    if (j.at("hash").get<std::string>() != std::to_string(v.hash())) throw ArtifactError("vocabulary hash mismatch");
    return v;
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("malformed vocabulary.json: ") + e.what());
  }
}

std::vector<ResultRow> load_results(const fs::path& path) {
  std::istringstream in(read_text(path));
  return read_results_csv(in);
}

PrefixLog as_log(std::vector<Prefix> prefixes) {
  PrefixLog log;
  log.prefixes = std::move(prefixes);
  return log;
}

void stage_ingest(const RunConfig& cfg, const fs::path& dir, RunManifest& m) {
  EventLog log;
  if (cfg.source == "synthetic") {
    log = generate_synthetic_log(class_pattern_spec(cfg.synthetic_traces), cfg.stream_seed("synth"));
  } else {
    std::ifstream in(cfg.source, std::ios::binary);
    if (!in) throw IngestionError("cannot open '" + cfg.source + "'");
    log = parse_log(in, cfg.mapping);
  }
  log.time_format = cfg.mapping.time_format;
  write_with(dir / "log.csv", [&](std::ostream& o) { write_log(o, log); });
  json info = {{"traces", log.traces.size()},
               {"events", log.event_count()},
               {"activities", log.vocabulary},
               {"positive_class_ratio", log.traces.empty() ? 0.0 : log.positive_class_ratio()},
               {"notes", log.notes}};
  write_text(dir / "ingest.json", info.dump(2));
  m.artifacts.emplace_back("log", "log.csv");
  m.artifacts.emplace_back("ingest_info", "ingest.json");
}

void stage_split(const RunConfig& cfg, const fs::path& dir, RunManifest& m) {
  std::istringstream in(read_text(dir / "log.csv"));
  const EventLog log = parse_log(in, canonical_mapping(cfg));
  const auto [train, test] = temporal_split(log, cfg.train_fraction);
  const ActivityVocabulary vocab = build_vocabulary(train);

  auto prefixes = [&](const EventLog& part, bool dedup) {
    PrefixLog p = extract_prefixes(part, cfg.min_len, cfg.max_len);
    return dedup ? deduplicate(p, cfg.remove_ambiguous) : p;
  };
  const PrefixLog train_p = prefixes(train, cfg.dedup);
  PrefixLog fit_p = train_p;
  PrefixLog val_p;
  if (cfg.validation_fraction > 0.0) {
    const auto [fit, val] = temporal_split(train, 1.0 - cfg.validation_fraction);
    fit_p = prefixes(fit, cfg.dedup);
    val_p = prefixes(val, cfg.dedup);
  }
  PrefixLog test_all = prefixes(test, cfg.dedup_test);
  std::vector<Prefix> test_p;
  std::size_t dropped = 0;
  for (auto& p : test_all.prefixes) {
    const auto acts = p.activities();
    const bool known = std::all_of(acts.begin(), acts.end(), [&](const auto& a) { return vocab.contains(a); });
    if (known) {
      test_p.push_back(std::move(p));
    } else {
      ++dropped;
    }
  }

  write_text(dir / "vocabulary.json",
             json({{"activities", vocab.activities()}, {"hash", std::to_string(vocab.hash())}}).dump(2));
  write_with(dir / "train_prefixes.csv", [&](std::ostream& o) { write_prefixes_csv(o, train_p.prefixes); });
  write_with(dir / "fit_prefixes.csv", [&](std::ostream& o) { write_prefixes_csv(o, fit_p.prefixes); });
  write_with(dir / "validation_prefixes.csv", [&](std::ostream& o) { write_prefixes_csv(o, val_p.prefixes); });
  write_with(dir / "test_prefixes.csv", [&](std::ostream& o) { write_prefixes_csv(o, test_p); });
  json info = {{"train_traces", train.traces.size()},
               {"test_traces", test.traces.size()},
               {"train_prefixes", train_p.prefixes.size()},
               {"fit_prefixes", fit_p.prefixes.size()},
               {"validation_prefixes", val_p.prefixes.size()},
               {"test_prefixes", test_p.size()},
               {"test_prefixes_dropped_unknown_activity", dropped}};
  write_text(dir / "split.json", info.dump(2));
  for (const char* name : {"vocabulary", "train_prefixes", "fit_prefixes", "validation_prefixes", "test_prefixes"}) {
    m.artifacts.emplace_back(name, std::string(name) + (std::string(name) == "vocabulary" ? ".json" : ".csv"));
  }
  m.artifacts.emplace_back("split_info", "split.json");
}

bool both_labels(const EncodedDataset& d) {
  const auto pos = std::count(d.labels.begin(), d.labels.end(), 1);
  return pos > 0 && pos < static_cast<long>(d.labels.size());
}

void stage_train(const RunConfig& cfg, const fs::path& dir, RunManifest& m) {
  const ActivityVocabulary vocab = load_vocabulary(dir);
  const auto train_p = load_prefixes(dir / "train_prefixes.csv");
  const auto fit_p = load_prefixes(dir / "fit_prefixes.csv");
  const auto val_p = load_prefixes(dir / "validation_prefixes.csv");
  const auto test_p = load_prefixes(dir / "test_prefixes.csv");
  const InputMode mode = input_mode_for(cfg.classifier);
  const auto fit = encode_dataset(as_log(fit_p), vocab, mode, cfg.max_len);
  const auto val = encode_dataset(as_log(val_p), vocab, mode, cfg.max_len);
  const auto test = encode_dataset(as_log(test_p), vocab, mode, cfg.max_len);
  const std::uint64_t seed = cfg.stream_seed("train");
  const bool use_validation = val.size() > 0 && both_labels(val);

  json info;
  Classifier clf;
  if (cfg.grid_search && use_validation) {
    auto grid = train_with_grid(cfg.classifier, fit, val, vocab, cfg.max_len,
                                default_grid(cfg.classifier, cfg.hyperparams), seed);
    info["grid_validation_auc"] = grid.validation_auc;
    info["grid_selected"] = grid.selected;
    clf = std::move(grid.classifier);
  } else {
    clf = train_classifier(cfg.classifier, fit, vocab, cfg.max_len, cfg.hyperparams, seed);
  }
  clf.set_threshold(use_validation ? select_threshold(clf, val, "validation") : select_threshold(clf, fit, "fit"));
  info["classifier"] = to_string(clf.kind());
  info["tau"] = clf.tau();
  info["threshold_selected_on"] = clf.threshold().selected_on;
  info["threshold_warning"] = clf.threshold().warning;
  info["fit_auc"] = evaluate_auc(clf, fit);
  if (use_validation) info["validation_auc"] = evaluate_auc(clf, val);
  if (both_labels(test)) info["test_auc"] = evaluate_auc(clf, test);
  write_text(dir / "classifier.json", clf.to_json());

  VaeConfig vc = cfg.vae;
  vc.max_len = cfg.max_len;
  vc.seed = cfg.stream_seed("vae");
  json vae_info = json::array();
  for (int label = 0; label < 2; ++label) {
    PrefixLog cls;
    cls.min_length = cfg.min_len;
    cls.max_length = cfg.max_len;
    for (const auto& p : train_p) {
      if (p.label == label) cls.prefixes.push_back(p);
    }
    if (cls.prefixes.empty()) throw TrainingError("no training prefixes with label " + std::to_string(label));
    const ClassManifold manifold = train_class_vae(cls, vocab, vc);
    std::vector<ActivitySequence> seqs;
    for (const auto& p : cls.prefixes) seqs.push_back(p.activities());
    const auto points = manifold.encode_batch(seqs);
    Eigen::MatrixXd mus(static_cast<Eigen::Index>(points.size()), manifold.latent_dim());
    for (std::size_t i = 0; i < points.size(); ++i) mus.row(static_cast<Eigen::Index>(i)) = points[i].mu.transpose();
    const auto decoded = manifold.decode_batch(mus);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) exact += decoded[i].activities == seqs[i] ? 1 : 0;
    const auto& curve = manifold.training_curve();
    vae_info.push_back({{"label", label},
                        {"prefixes", seqs.size()},
                        {"first_loss", curve.front().total},
                        {"last_loss", curve.back().total},
                        {"last_kl", curve.back().kl},
                        {"reconstruction_rate", static_cast<double>(exact) / static_cast<double>(seqs.size())}});
    const std::string name = "manifold_" + std::to_string(label);
    write_text(dir / (name + ".json"), manifold.to_json());
    m.artifacts.emplace_back(name, name + ".json");
  }
  info["vae"] = vae_info;
  write_text(dir / "training.json", info.dump(2));
  m.artifacts.emplace_back("classifier", "classifier.json");
  m.artifacts.emplace_back("training_info", "training.json");
}

void stage_attack(const RunConfig& cfg, const fs::path& dir, RunManifest& m) {
  const ActivityVocabulary vocab = load_vocabulary(dir);
  const Classifier clf = Classifier::from_json(read_text(dir / "classifier.json"), vocab);
  const ClassManifold m0 = ClassManifold::from_json(read_text(dir / "manifold_0.json"), vocab);
  const ClassManifold m1 = ClassManifold::from_json(read_text(dir / "manifold_1.json"), vocab);
  const auto table = build_position_activity_table(as_log(load_prefixes(dir / "train_prefixes.csv")));
  const auto test_p = load_prefixes(dir / "test_prefixes.csv");
  const std::uint64_t seed = cfg.stream_seed("attack");
  std::vector<ResultRow> rows;
  for (auto attack : cfg.attacks) {
    attack.seed = seed;
    GenerateOptions opts;
    opts.threads = cfg.threads;
    opts.max_prefixes = cfg.max_prefixes;
    for (auto& r : generate_adversarials(test_p, clf, m0, m1, table, attack, opts)) {
      rows.push_back(ResultRow{std::move(r), std::nullopt, 0, std::nullopt, std::nullopt});
    }
  }
  write_with(dir / "adversarials.csv", [&](std::ostream& o) { write_results_csv(o, rows); });
  m.artifacts.emplace_back("adversarials", "adversarials.csv");
}

void stage_evaluate(const RunConfig&, const fs::path& dir, RunManifest& m) {
  const ActivityVocabulary vocab = load_vocabulary(dir);
  auto rows = load_results(dir / "adversarials.csv");
  for (auto& row : rows) {
    if (row.result.status != AttackStatus::kOk) continue;
    row.panel = metric_panel(row.result.original, row.result.adversarial, vocab, row.result.latent_distance);
    row.adversarial_length = static_cast<int>(row.result.adversarial.size());
  }
  write_with(dir / "results.csv", [&](std::ostream& o) { write_results_csv(o, rows); });
  m.artifacts.emplace_back("results", "results.csv");
}

void stage_profile(const RunConfig&, const fs::path& dir, RunManifest& m) {
  auto rows = load_results(dir / "results.csv");
  std::vector<NormalizedAttackMetrics> population;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].panel) continue;
    population.push_back(normalize_metrics(rows[i].panel->dl_edit, rows[i].panel->emd, rows[i].result.prefix_length,
                                           rows[i].result.flipped));
    members.push_back(i);
  }
  QuartileThresholds t;
  const auto profiles = assign_profiles(population, &t);
  for (std::size_t k = 0; k < members.size(); ++k) {
    rows[members[k]].normalized = population[k];
    rows[members[k]].profile = profiles[k];
  }
  write_with(dir / "profiled.csv", [&](std::ostream& o) { write_results_csv(o, rows); });
  json q = {{"population", "all attack methods of this run (one log, one classifier)"},
            {"size", population.size()},
            {"dl_q1", t.dl_q1},
            {"dl_median", t.dl_med},
            {"dl_q3", t.dl_q3},
            {"emd_q1", t.emd_q1},
            {"emd_median", t.emd_med},
            {"emd_q3", t.emd_q3}};
  write_text(dir / "quartiles.json", q.dump(2));
  m.artifacts.emplace_back("profiled", "profiled.csv");
  m.artifacts.emplace_back("quartiles", "quartiles.json");
}

void stage_report(const RunConfig& cfg, const fs::path& dir, RunManifest& m) {
  const auto rows = load_results(dir / "profiled.csv");
  for (const auto& p : emit_report(rows, to_string(cfg.classifier), dir)) {
    m.artifacts.emplace_back(p.stem().string(), p.filename().string());
  }
}

RunManifest load_or_new_manifest(const fs::path& dir, const std::string& hash) {
  const fs::path path = dir / "manifest.json";
  if (fs::exists(path)) {
    RunManifest m = RunManifest::from_json(read_text(path));
    if (m.config_hash == hash) return m;
  }
  RunManifest m;
  m.config_hash = hash;
  return m;
}

void record_artifacts(RunManifest& m, std::vector<std::pair<std::string, std::string>> added) {
  for (auto& [k, v] : added) {
    auto it = std::find_if(m.artifacts.begin(), m.artifacts.end(), [&](const auto& a) { return a.first == k; });
    if (it != m.artifacts.end()) {
      it->second = v;
    } else {
      m.artifacts.emplace_back(k, v);
    }
  }
}

void run_stage(const RunConfig& cfg, const std::string& stage, const fs::path& dir, RunManifest& manifest) {
  using Fn = void (*)(const RunConfig&, const fs::path&, RunManifest&);
  static const std::map<std::string, Fn> table = {
      {stages::kIngest, stage_ingest},     {stages::kSplit, stage_split},       {stages::kTrain, stage_train},
      {stages::kAttack, stage_attack},     {stages::kEvaluate, stage_evaluate}, {stages::kProfile, stage_profile},
      {stages::kReport, stage_report}};
  auto it = table.find(stage);
  if (it == table.end()) throw ConfigError("unknown stage '" + stage + "'");

  StageRecord rec{stage, now_iso(), "", "running", ""};
  manifest.stages.erase(std::remove_if(manifest.stages.begin(), manifest.stages.end(),
                                       [&](const StageRecord& s) { return s.name == stage; }),
                        manifest.stages.end());
  RunManifest scratch;
  try {
    it->second(cfg, dir, scratch);
  } catch (const std::exception& e) {
    rec.finished = now_iso();
    rec.status = "failed";
    rec.message = e.what();
    manifest.stages.push_back(rec);
    manifest.failed_stage = stage;
    write_text(dir / "manifest.json", manifest.to_json());
    throw StageError(stage, e.what());
  }
  rec.finished = now_iso();
  rec.status = "ok";
  manifest.stages.push_back(rec);
  record_artifacts(manifest, scratch.artifacts);
  if (manifest.failed_stage == stage) manifest.failed_stage.clear();
  write_text(dir / "manifest.json", manifest.to_json());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

namespace stages {

std::vector<std::string> all() { return {kIngest, kSplit, kTrain, kAttack, kEvaluate, kProfile, kReport}; }

RunManifest run(const RunConfig& config, const std::string& stage) {
  config.validate();
  const fs::path dir = config.resolved_output();
  fs::create_directories(dir);
  RunManifest manifest = load_or_new_manifest(dir, hash_hex(config.hash()));
  write_text(dir / "config.txt", config.canonical());
  run_stage(config, stage, dir, manifest);
  return manifest;
}

}  // namespace stages

RunManifest run_pipeline(const RunConfig& config) {
  config.validate();
  const fs::path dir = config.resolved_output();
  fs::create_directories(dir);
  RunManifest manifest;
  manifest.config_hash = hash_hex(config.hash());
  write_text(dir / "config.txt", config.canonical());
  manifest.artifacts.emplace_back("config", "config.txt");
  for (const auto& stage : stages::all()) run_stage(config, stage, dir, manifest);
  return manifest;
}

void write_synthetic_log(const fs::path& path, int traces, std::uint64_t seed) {
  const EventLog log = generate_synthetic_log(class_pattern_spec(traces), seed);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_with(path, [&](std::ostream& o) { write_log(o, log); });
}

}  // namespace latentadv
