#pragma once

#include "latentadv/classifiers.hpp"
#include "latentadv/eventlog.hpp"
#include "latentadv/manifold.hpp"

// Small models shared by several test files; trained once per process.
struct SmallWorld {
  latentadv::EventLog log;
  latentadv::ActivityVocabulary vocab;
  latentadv::PrefixLog train;
  latentadv::PrefixLog test;
  latentadv::PrefixLog class0;
  latentadv::ClassManifold manifold0;
  latentadv::ClassManifold manifold1;
  latentadv::Classifier recurrent;
};

inline const SmallWorld& small_world() {
  static const SmallWorld world = [] {
    using namespace latentadv;
    SmallWorld w;
    w.log = generate_synthetic_log(class_pattern_spec(200), 21);
    const auto split = temporal_split(w.log, 0.8);
    w.vocab = build_vocabulary(split.train);
    w.train = deduplicate(extract_prefixes(split.train, 1, 8), true);
    w.test = extract_prefixes(split.test, 1, 8);
    w.class0.min_length = 1;
    w.class0.max_length = 8;
    latentadv::PrefixLog class1 = w.class0;
    for (const auto& p : w.train.prefixes) {
      (p.label == 0 ? w.class0 : class1).prefixes.push_back(p);
    }
    VaeConfig vc;
    vc.max_len = 8;
    vc.epochs = 40;
    vc.kl_weight = 0.05;
    vc.kl_warmup_epochs = 10;
    vc.seed = 3;
    w.manifold0 = train_class_vae(w.class0, w.vocab, vc);
    w.manifold1 = train_class_vae(class1, w.vocab, vc);
    ClassifierHyperparams hp;
    hp.recurrent.epochs = 15;
    hp.recurrent.hidden_size = 16;
    const auto data = encode_dataset(w.train, w.vocab, InputMode::kSequence, 8);
    w.recurrent = train_classifier(ClassifierKind::kRecurrent, data, w.vocab, 8, hp, 5);
    w.recurrent.set_threshold(select_threshold(w.recurrent, data, "fit"));
    return w;
  }();
  return world;
}
