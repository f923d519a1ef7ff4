#include <fstream>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "latentadv/attacks.hpp"
#include "latentadv/classifiers.hpp"
#include "latentadv/config.hpp"
#include "latentadv/encoding.hpp"
#include "latentadv/errors.hpp"
#include "latentadv/eventlog.hpp"
#include "latentadv/harness.hpp"
#include "latentadv/manifold.hpp"
#include "latentadv/metrics.hpp"
#include "latentadv/profiling.hpp"

namespace py = pybind11;
using namespace latentadv;
using namespace pybind11::literals;

namespace {

EventLog read_log(const std::string& path, const ColumnMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  return parse_log(in, mapping);
}

std::string log_to_csv(const EventLog& log) {
  std::ostringstream out;
  write_log(out, log);
  return out.str();
}

EncodedDataset encode_for(const PrefixLog& prefixes, const ActivityVocabulary& vocab, ClassifierKind kind,
                          int max_len) {
  return encode_dataset(prefixes, vocab, input_mode_for(kind), max_len);
}

RunConfig run_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
  Config c = path ? Config::parse_file(*path) : Config();
  for (const auto& o : overrides) c.set_override(o);
  return RunConfig::from_config(c);
}

py::dict manifest_dict(const RunManifest& m) {
  py::list stages;
  for (const auto& s : m.stages) {
    stages.append(py::dict("name"_a = s.name, "status"_a = s.status, "started"_a = s.started,
                           "finished"_a = s.finished, "message"_a = s.message));
  }
  py::dict artifacts;
  for (const auto& [k, v] : m.artifacts) artifacts[py::str(k)] = v;
  return py::dict("config_hash"_a = m.config_hash, "version"_a = m.version, "stages"_a = stages,
                  "artifacts"_a = artifacts, "failed_stage"_a = m.failed_stage);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Latent-space adversarial attacks on outcome-prediction models";
  m.attr("__version__") = kVersion;

  static py::exception<Error> base(m, "Error");
  py::register_exception<IngestionError>(m, "IngestionError", base.ptr());
  py::register_exception<SplitError>(m, "SplitError", base.ptr());
  py::register_exception<EncodingError>(m, "EncodingError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<PredictionError>(m, "PredictionError", base.ptr());
  py::register_exception<EvaluationError>(m, "EvaluationError", base.ptr());
  py::register_exception<UnsupportedOperation>(m, "UnsupportedOperation", base.ptr());
  py::register_exception<SelectionError>(m, "SelectionError", base.ptr());
  py::register_exception<MetricError>(m, "MetricError", base.ptr());
  py::register_exception<ProfilingError>(m, "ProfilingError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ArtifactError>(m, "ArtifactError", base.ptr());
  py::register_exception<ReportError>(m, "ReportError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  // ---- event logs
  py::enum_<TimeFormat>(m, "TimeFormat").value("ticks", TimeFormat::kTicks).value("iso8601", TimeFormat::kIso8601);

  py::class_<Event>(m, "Event")
      .def_readonly("case_id", &Event::case_id)
      .def_readonly("activity", &Event::activity)
      .def_readonly("timestamp", &Event::timestamp)
      .def_readonly("position", &Event::position);

  py::class_<Trace>(m, "Trace")
      .def_readonly("case_id", &Trace::case_id)
      .def_readonly("events", &Trace::events)
      .def_readonly("label", &Trace::label)
      .def("activities", &Trace::activities);

  py::class_<EventLog>(m, "EventLog")
      .def_readonly("traces", &EventLog::traces)
      .def_readonly("vocabulary", &EventLog::vocabulary)
      .def_readonly("notes", &EventLog::notes)
      .def("positive_class_ratio", &EventLog::positive_class_ratio)
      .def("event_count", &EventLog::event_count)
      .def("to_csv", &log_to_csv)
      .def("__len__", [](const EventLog& l) { return l.traces.size(); })
      .def("__eq__", [](const EventLog& a, const EventLog& b) { return a == b; });

  py::class_<Prefix>(m, "Prefix")
      .def_readonly("case_id", &Prefix::case_id)
      .def_readonly("events", &Prefix::events)
      .def_readonly("label", &Prefix::label)
      .def("length", &Prefix::length)
      .def("activities", &Prefix::activities);

  py::class_<PrefixLog>(m, "PrefixLog")
      .def_readonly("prefixes", &PrefixLog::prefixes)
      .def_readonly("min_length", &PrefixLog::min_length)
      .def_readonly("max_length", &PrefixLog::max_length)
      .def("__len__", [](const PrefixLog& p) { return p.prefixes.size(); });

  py::class_<ColumnMapping>(m, "ColumnMapping")
      .def(py::init<>())
      .def_readwrite("case_column", &ColumnMapping::case_column)
      .def_readwrite("activity_column", &ColumnMapping::activity_column)
      .def_readwrite("timestamp_column", &ColumnMapping::timestamp_column)
      .def_readwrite("label_column", &ColumnMapping::label_column)
      .def_readwrite("time_format", &ColumnMapping::time_format)
      .def_readwrite("label_values", &ColumnMapping::label_values);

  m.def("read_log", &read_log, "path"_a, "mapping"_a = ColumnMapping());
  m.def(
      "parse_log",
      [](const std::string& text, const ColumnMapping& mapping) {
        std::istringstream in(text);
        return parse_log(in, mapping);
      },
      "text"_a, "mapping"_a = ColumnMapping());
  m.def("synthetic_log", [](int traces, std::uint64_t seed) { return generate_synthetic_log(class_pattern_spec(traces), seed); },
        "traces"_a = 500, "seed"_a = 7, "Class-pattern log over activities a, b, c, x, y.");
  m.def(
      "temporal_split",
      [](const EventLog& log, double fraction) {
        auto s = temporal_split(log, fraction);
        return py::make_tuple(s.train, s.test);
      },
      "log"_a, "train_fraction"_a = 0.8);
  m.def("extract_prefixes", &extract_prefixes, "log"_a, "min_len"_a = 1, "max_len"_a = 10);
  m.def("deduplicate", &deduplicate, "prefixes"_a, "remove_ambiguous"_a = true);

  // ---- encoding
  py::class_<ActivityVocabulary>(m, "ActivityVocabulary")
      .def(py::init<std::vector<std::string>>(), "activities"_a)
      .def_property_readonly("activities", &ActivityVocabulary::activities)
      .def("size", &ActivityVocabulary::size)
      .def("index_of", &ActivityVocabulary::index_of)
      .def("__contains__", &ActivityVocabulary::contains)
      .def("hash", &ActivityVocabulary::hash);
  m.def("build_vocabulary", &build_vocabulary);
  m.def(
      "aggregate_encode",
      [](const ActivitySequence& s, const ActivityVocabulary& v) { return aggregate_encode(s, v).counts; },
      "activities"_a, "vocab"_a);
  m.def(
      "onehot_encode",
      [](const ActivitySequence& s, const ActivityVocabulary& v, int max_len) {
        return onehot_encode(s, v, max_len).rows;
      },
      "activities"_a, "vocab"_a, "max_len"_a);
  m.def(
      "decode_sequence",
      [](const Eigen::MatrixXd& rows, const ActivityVocabulary& v) { return decode_sequence(rows, v).activities; },
      "rows"_a, "vocab"_a);

  // ---- classifiers
  py::enum_<ClassifierKind>(m, "ClassifierKind")
      .value("linear", ClassifierKind::kLinear)
      .value("bagged_trees", ClassifierKind::kBaggedTrees)
      .value("boosted_trees", ClassifierKind::kBoostedTrees)
      .value("recurrent", ClassifierKind::kRecurrent);

  py::class_<Classifier>(m, "Classifier")
      .def_property_readonly("kind", &Classifier::kind)
      .def_property_readonly("tau", &Classifier::tau)
      .def_property_readonly("max_len", &Classifier::max_len)
      .def("predict_proba", py::overload_cast<const std::vector<ActivitySequence>&>(&Classifier::predict_proba,
                                                                                     py::const_))
      .def("predict_label",
           [](const Classifier& c, const ActivitySequence& s) { return c.predict(s).label; })
      .def("set_tau", [](Classifier& c, double tau) { c.set_threshold(DecisionThreshold{tau, "f1", "user", ""}); })
      .def("to_json", &Classifier::to_json)
      .def_static("from_json", &Classifier::from_json, "text"_a, "vocab"_a);

  m.def(
      "train_classifier",
      [](ClassifierKind kind, const PrefixLog& train, const ActivityVocabulary& vocab, int max_len,
         std::uint64_t seed, std::optional<PrefixLog> validation) {
        const auto data = encode_for(train, vocab, kind, max_len);
        Classifier c = train_classifier(kind, data, vocab, max_len, ClassifierHyperparams{}, seed);
        if (validation) {
          c.set_threshold(select_threshold(c, encode_for(*validation, vocab, kind, max_len), "validation"));
        } else {
          c.set_threshold(select_threshold(c, data, "fit"));
        }
        return c;
      },
      "kind"_a, "train"_a, "vocab"_a, "max_len"_a = 10, "seed"_a = 0, "validation"_a = py::none(),
      "Trains with default hyperparameters and sets the F1-maximizing threshold.");
  m.def(
      "select_threshold",
      [](const std::vector<double>& p, const std::vector<int>& y) { return select_threshold(p, y).tau; }, "probabilities"_a,
      "labels"_a);
  m.def("auc_score", &auc_score, "scores"_a, "labels"_a);
  m.def(
      "evaluate_auc",
      [](const Classifier& c, const PrefixLog& test) {
        return evaluate_auc(c, encode_for(test, c.vocabulary(), c.kind(), c.max_len()));
      },
      "classifier"_a, "test"_a);

  // ---- manifold
  py::class_<VaeConfig>(m, "VaeConfig")
      .def(py::init<>())
      .def_readwrite("latent_dim", &VaeConfig::latent_dim)
      .def_readwrite("hidden_size", &VaeConfig::hidden_size)
      .def_readwrite("epochs", &VaeConfig::epochs)
      .def_readwrite("learning_rate", &VaeConfig::learning_rate)
      .def_readwrite("kl_weight", &VaeConfig::kl_weight)
      .def_readwrite("kl_warmup_epochs", &VaeConfig::kl_warmup_epochs)
      .def_readwrite("batch_size", &VaeConfig::batch_size)
      .def_readwrite("seed", &VaeConfig::seed)
      .def_readwrite("max_len", &VaeConfig::max_len);

  py::class_<LatentPoint>(m, "LatentPoint")
      .def(py::init([](Eigen::VectorXd mu, Eigen::VectorXd sigma) { return LatentPoint{std::move(mu), std::move(sigma)}; }),
           "mu"_a, "sigma"_a)
      .def_readonly("mu", &LatentPoint::mu)
      .def_readonly("sigma", &LatentPoint::sigma);

  py::class_<ClassManifold>(m, "ClassManifold")
      .def_property_readonly("class_label", &ClassManifold::class_label)
      .def_property_readonly("latent_dim", &ClassManifold::latent_dim)
      .def("encode", &ClassManifold::encode, "activities"_a)
      .def("decode", [](const ClassManifold& mf, const Eigen::VectorXd& z) { return mf.decode(z).activities; }, "z"_a)
      .def("decode_probabilities", &ClassManifold::decode_probabilities, "z"_a)
      .def("training_curve",
           [](const ClassManifold& mf) {
             py::list out;
             for (const auto& e : mf.training_curve()) out.append(py::make_tuple(e.nll, e.kl, e.total));
             return out;
           })
      .def("to_json", &ClassManifold::to_json)
      .def_static("from_json", &ClassManifold::from_json, "text"_a, "vocab"_a);

  m.def("train_class_vae", &train_class_vae, "prefixes"_a, "vocab"_a, "config"_a = VaeConfig(),
        py::call_guard<py::gil_scoped_release>());
  m.def("reparameterize", &reparameterize, "point"_a, "eps"_a);
  m.def("gaussian_kl", &gaussian_kl, "point"_a);
  m.def(
      "latent_loss",
      [](const Classifier& c, const ClassManifold& mf, const Eigen::VectorXd& z, const Eigen::VectorXd& z0, int target,
         double lambda_dist) {
        const auto l = loss_and_gradient_wrt_latent(c, mf, z, z0, target, lambda_dist);
        return py::make_tuple(l.loss, l.gradient);
      },
      "classifier"_a, "manifold"_a, "z"_a, "z0"_a, "target"_a, "lambda_dist"_a = 0.1);

  // ---- attacks
  py::enum_<Strategy>(m, "Strategy")
      .value("regular", Strategy::kRegular)
      .value("projected", Strategy::kProjected)
      .value("latent_sampled", Strategy::kLatentSampled)
      .value("gradient_based", Strategy::kGradientBased);
  py::enum_<AttackType>(m, "AttackType")
      .value("last_event", AttackType::kLastEvent)
      .value("all_event", AttackType::kAllEvent)
      .value("k_event", AttackType::kKEvent);

  py::class_<AttackConfig>(m, "AttackConfig")
      .def(py::init<>())
      .def_readwrite("strategy", &AttackConfig::strategy)
      .def_readwrite("attack_type", &AttackConfig::attack_type)
      .def_readwrite("nr_adv", &AttackConfig::nr_adv)
      .def_readwrite("k_events", &AttackConfig::k_events)
      .def_readwrite("max_iters", &AttackConfig::max_iters)
      .def_readwrite("step_size", &AttackConfig::step_size)
      .def_readwrite("lambda_dist", &AttackConfig::lambda_dist)
      .def_readwrite("seed", &AttackConfig::seed)
      .def_property_readonly("name", &AttackConfig::name);
  m.def("all_attack_methods", &all_attack_methods, "seed"_a = 0);

  py::class_<PositionActivityTable>(m, "PositionActivityTable")
      .def("contains", &PositionActivityTable::contains)
      .def("at", &PositionActivityTable::at)
      .def("__len__", &PositionActivityTable::size);
  m.def("build_position_activity_table", py::overload_cast<const PrefixLog&>(&build_position_activity_table));

  m.def(
      "permute_last_event",
      [](const ActivitySequence& p, const ActivityVocabulary& v, std::uint64_t seed, int nr_adv) {
        Rng rng(seed);
        return permute_last_event(p, v, rng, nr_adv);
      },
      "prefix"_a, "vocab"_a, "seed"_a = 0, "nr_adv"_a = 16);
  m.def(
      "permute_all_events",
      [](const ActivitySequence& p, const ActivityVocabulary& v, std::uint64_t seed, int nr_adv) {
        Rng rng(seed);
        return permute_all_events(p, v, rng, nr_adv);
      },
      "prefix"_a, "vocab"_a, "seed"_a = 0, "nr_adv"_a = 16);
  m.def(
      "permute_k_events",
      [](const ActivitySequence& p, int k, const PositionActivityTable& t, std::uint64_t seed, int nr_adv) {
        Rng rng(seed);
        return permute_k_events(p, k, t, rng, nr_adv);
      },
      "prefix"_a, "k"_a, "table"_a, "seed"_a = 0, "nr_adv"_a = 16);
  m.def("project", &project, "manifold"_a, "candidate"_a);
  m.def(
      "latent_sampling_attack",
      [](const ClassManifold& mf, const ActivitySequence& p, int nr_adv, std::uint64_t seed) {
        Rng rng(seed);
        return latent_sampling_attack(mf, p, nr_adv, rng);
      },
      "manifold"_a, "prefix"_a, "nr_adv"_a = 16, "seed"_a = 0);
  m.def(
      "select_closest",
      [](const ActivitySequence& original, const Candidates& cands, const ClassManifold& mf) {
        const auto s = select_closest(original, cands, mf);
        return py::make_tuple(s.index, s.sequence, s.distance);
      },
      "original"_a, "candidates"_a, "manifold"_a);

  py::class_<AdversarialResult>(m, "AdversarialResult")
      .def_readonly("case_id", &AdversarialResult::case_id)
      .def_readonly("prefix_length", &AdversarialResult::prefix_length)
      .def_readonly("label", &AdversarialResult::label)
      .def_readonly("original", &AdversarialResult::original)
      .def_readonly("adversarial", &AdversarialResult::adversarial)
      .def_readonly("attack", &AdversarialResult::attack)
      .def_property_readonly("status", [](const AdversarialResult& r) { return to_string(r.status); })
      .def_readonly("message", &AdversarialResult::message)
      .def_readonly("original_prob", &AdversarialResult::original_prob)
      .def_readonly("adversarial_prob", &AdversarialResult::adversarial_prob)
      .def_readonly("flipped", &AdversarialResult::flipped)
      .def_readonly("latent_distance", &AdversarialResult::latent_distance);

  m.def(
      "generate_adversarials",
      [](const PrefixLog& prefixes, const Classifier& c, const ClassManifold& m0, const ClassManifold& m1,
         const PositionActivityTable& table, const AttackConfig& cfg, int threads, std::size_t max_prefixes) {
        GenerateOptions opts;
        opts.threads = threads;
        opts.max_prefixes = max_prefixes;
        return generate_adversarials(prefixes.prefixes, c, m0, m1, table, cfg, opts);
      },
      "prefixes"_a, "classifier"_a, "manifold0"_a, "manifold1"_a, "table"_a, "config"_a, "threads"_a = 1,
      "max_prefixes"_a = 0, py::call_guard<py::gil_scoped_release>());

  // ---- metrics
  m.def("dl_edit", &dl_edit, "a"_a, "b"_a);
  m.def("lcp", &lcp, "a"_a, "b"_a);
  m.def("emd", &emd, "a"_a, "b"_a, "vocab"_a);
  m.def("emd_counts", &emd_counts, "a"_a, "b"_a);
  m.def(
      "l1_l2",
      [](const std::vector<int>& a, const std::vector<int>& b) { return l1_l2(AggregatedVector{a}, AggregatedVector{b}); },
      "a"_a, "b"_a);
  m.def("success_rate", &success_rate, "results"_a);

  // ---- profiling
  m.def("quantile_inclusive", &quantile_inclusive, "values"_a, "q"_a);
  m.def(
      "assign_profiles",
      [](const std::vector<std::pair<double, double>>& points) {
        std::vector<NormalizedAttackMetrics> pop;
        for (const auto& [dl, e] : points) pop.push_back({dl, e, false});
        std::vector<std::string> out;
        for (auto p : assign_profiles(pop)) out.push_back(to_string(p));
        return out;
      },
      "points"_a, "Profiles for (dl_norm, emd_norm) points, quartiles pooled over the list.");

  // ---- harness
  m.def("write_synthetic_log", &write_synthetic_log, "path"_a, "traces"_a = 500, "seed"_a = 7);
  m.def(
      "run_pipeline",
      [](const std::optional<std::string>& config, const std::vector<std::string>& overrides) {
        const RunConfig cfg = run_config(config, overrides);
        RunManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = run_pipeline(cfg);
        }
        return manifest_dict(manifest);
      },
      "config"_a = py::none(), "overrides"_a = std::vector<std::string>{},
      "Runs every stage. overrides are 'section.key=value' strings.");
  m.def(
      "run_stage",
      [](const std::string& stage, const std::optional<std::string>& config, const std::vector<std::string>& overrides) {
        const RunConfig cfg = run_config(config, overrides);
        RunManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = stages::run(cfg, stage);
        }
        return manifest_dict(manifest);
      },
      "stage"_a, "config"_a = py::none(), "overrides"_a = std::vector<std::string>{});
  m.attr("STAGES") = stages::all();
}
