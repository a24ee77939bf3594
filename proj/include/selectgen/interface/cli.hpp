// Copyright 2026 The SelectGen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: train, eval, sample, posterior, serve, synth.
// Exit codes: 0 success, 1 configuration or input error, 2 training
// divergence.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "selectgen/core/errors.hpp"
#include "selectgen/data/corpus.hpp"
#include "selectgen/data/grammar.hpp"
#include "selectgen/data/tokenize.hpp"
#include "selectgen/eval/battery.hpp"
#include "selectgen/eval/report.hpp"
#include "selectgen/interface/run_config.hpp"
#include "selectgen/interface/server.hpp"
#include "selectgen/interface/service.hpp"
#include "selectgen/model/checkpoint.hpp"
#include "selectgen/model/inference.hpp"
#include "selectgen/train/trainer.hpp"

namespace selectgen::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitDiverged = 2;

inline int cli_train(const RunConfig& rc, std::ostream& out) {
  require_key(rc.corpus.has_value(), "corpus");
  require_key(!rc.checkpoint.empty(), "checkpoint");
  require_key(!rc.metrics_log.empty(), "metrics_log");
  LoadedCorpus data = load_run_corpus(rc);
  if (data.train.empty()) throw ConfigError("training split is empty");
  ModelConfig mc = rc.model;
  mc.vocab_size = data.vocab.size();
  SelectionModel model(mc);
  model.initialize(derive_seed(rc.train.seed, 0));
  std::ofstream log(rc.metrics_log, std::ios::binary);
  if (!log) throw ConfigError("cannot write metrics log '" + rc.metrics_log + "'");
  Trainer trainer(model, data.vocab, rc.train);
  const TrainResult r = trainer.train(data.train, data.valid, &log);
  const nlohmann::json strategy{{"strategy", to_json(rc.train.strategy)},
                                {"optimizer", to_json(rc.train.optimizer)},
                                {"schedule", to_json(rc.train.schedule)},
                                {"seed", rc.train.seed}};
  save_checkpoint(rc.checkpoint, model, data.vocab, strategy);
  out << "trained " << strategy_name(rc.train.strategy.kind) << " for " << r.steps << " steps";
  if (r.switch_step) out << " (joint phase from step " << r.switch_step << ")";
  out << "; held-out bound " << r.final_stats.bound << "\ncheckpoint: " << rc.checkpoint << "\n";
  return kExitOk;
}

inline int cli_eval(const RunConfig& rc, std::ostream& out) {
  require_key(!rc.checkpoint.empty(), "checkpoint");
  require_key(!rc.report.empty(), "report");
  const Checkpoint ckpt = load_checkpoint(rc.checkpoint);
  LoadedCorpus data = load_run_corpus(rc, &ckpt.vocab);
  data::Corpus test = std::move(data.test);
  if (test.empty()) throw ConfigError("test split is empty");
  if (rc.eval.max_examples && test.size() > rc.eval.max_examples) test.resize(rc.eval.max_examples);
  const eval::MetricReport report =
      eval::summarize(eval::run_battery(ckpt.model, ckpt.vocab, test, rc.eval.battery));
  nlohmann::json header{{"checkpoint_id", ckpt.id},
                        {"training", ckpt.strategy},
                        {"eval_seed", rc.eval.battery.seed},
                        {"masks_per_example", rc.eval.battery.masks},
                        {"samples_per_mask", rc.eval.battery.samples}};
  std::ofstream f(rc.report, std::ios::binary);
  if (!f) throw ConfigError("cannot write report '" + rc.report + "'");
  f << eval::to_json(report, ckpt.vocab, header).dump(2) << "\n";
  out << "evaluated " << report.examples << " examples; oracle ROUGE-1 " << report.oracle.rouge1
      << ", effect " << report.diversity.effect << ", self-BLEU-1 " << report.self_bleu1
      << "\nreport: " << rc.report << "\n";
  return kExitOk;
}

namespace detail {

inline void print_selector_table(std::ostream& out, const std::vector<std::string>& toks,
                                 const std::vector<double>& p, const char* label,
                                 const SelectionMask* mask) {
  std::size_t width = 5;
  for (const auto& t : toks) width = std::max(width, t.size());
  char buf[64];
  out << std::string(width - 5, ' ') << "token  " << label << (mask ? "  mask" : "") << "\n";
  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.3f", p[i]);
    out << std::string(width - toks[i].size(), ' ') << toks[i] << "  " << buf;
    if (mask) out << "  " << static_cast<int>(mask->bits[i]);
    out << "\n";
  }
}

inline std::string text_of(const data::Vocabulary& vocab, const std::vector<TokenId>& ids) {
  return data::detokenize(vocab.decode(ids));
}

inline Sequence encode_source(const Checkpoint& ckpt, const std::string& text,
                              std::vector<std::string>& toks) {
  toks = data::tokenize(text);
  if (toks.empty()) throw ConfigError("source has no tokens");
  return ckpt.vocab.encode(toks);
}

}  // namespace detail

struct SampleOptions {
  std::string checkpoint, source, mask;
  std::size_t samples = 1;
  std::size_t beam = 1;
  std::uint64_t seed = 0;
  double temperature = 1.0;
};

// Without --mask every output uses its own prior mask draw, decoded greedily
// (or with beam search). With --mask, several outputs are temperature
// samples under that mask.
inline int cli_sample(const SampleOptions& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  std::vector<std::string> toks;
  const Sequence x = detail::encode_source(ckpt, o.source, toks);
  const BernoulliVector gamma = prior(ckpt.model, x);
  Rng rng(o.seed);
  DecodeOptions dec;
  if (o.beam > 1) {
    dec.mode = DecodeMode::kBeam;
    dec.beam = o.beam;
  }
  if (!o.mask.empty()) {
    SelectionMask m;
    try {
      m = SelectionMask::parse(o.mask);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (m.size() != x.size())
      throw ConfigError("--mask has " + std::to_string(m.size()) + " bits for " +
                        std::to_string(x.size()) + " source tokens");
    if (!m.any()) throw AllMaskedError("--mask");
    detail::print_selector_table(out, toks, gamma.probs, "gamma", &m);
    out << "mask: " << m.str() << "\n";
    if (o.samples > 1) {
      dec.mode = DecodeMode::kSample;
      dec.samples = o.samples;
      dec.temperature = o.temperature;
    }
    for (const Generation& g : generate(ckpt.model, x, m, dec, &rng)) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", g.log_prob);
      out << "[" << buf << "] " << detail::text_of(ckpt.vocab, g.ids) << "\n";
    }
    return kExitOk;
  }
  detail::print_selector_table(out, toks, gamma.probs, "gamma", nullptr);
  for (std::size_t s = 0; s < std::max<std::size_t>(o.samples, 1); ++s) {
    const SelectionMask m = sample_mask(gamma, rng);
    const Generation g = generate(ckpt.model, x, m, dec).front();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", g.log_prob);
    out << "mask " << m.str() << "  [" << buf << "] " << detail::text_of(ckpt.vocab, g.ids) << "\n";
  }
  return kExitOk;
}

inline int cli_posterior(const std::string& checkpoint, const std::string& source,
                         const std::string& target, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  std::vector<std::string> toks;
  const Sequence x = detail::encode_source(ckpt, source, toks);
  const auto ytoks = data::tokenize(target);
  if (ytoks.empty()) throw ConfigError("target has no tokens");
  const BernoulliVector q = posterior(ckpt.model, x, ckpt.vocab.encode_target(ytoks));
  const SelectionMask m = best_select(q);
  detail::print_selector_table(out, toks, q.probs, "q", &m);
  out << "best mask: " << m.str() << "\n";
  out << "decode: " << detail::text_of(ckpt.vocab, greedy_decode(ckpt.model, x, m).ids) << "\n";
  return kExitOk;
}

inline int cli_synth(const std::string& grammar, std::size_t size, std::uint64_t seed,
                     const std::string& path, std::ostream& out) {
  const data::Grammar g = load_grammar(grammar);
  const data::Vocabulary vocab = data::build_vocabulary(g);
  data::write_corpus(path, data::generate_corpus(g, vocab, size, seed));
  out << "wrote " << size << " examples to " << path << "\n";
  return kExitOk;
}

// Parses argv and dispatches. Diagnostics go to `err`.
inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"selectgen: text generation with controllable content selection"};
  app.require_subcommand(1);
  std::string config;
  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", config, "run config (JSON)")->required();
  auto* evaluate = app.add_subcommand("eval", "evaluate a checkpoint and write a metric report");
  evaluate->add_option("--config", config, "run config (JSON)")->required();

  SampleOptions so;
  auto* sample = app.add_subcommand("sample", "show selector probabilities and generations");
  sample->add_option("--checkpoint", so.checkpoint)->required();
  sample->add_option("--source", so.source)->required();
  sample->add_option("--mask", so.mask, "explicit selection bit-string");
  sample->add_option("--samples", so.samples, "number of outputs");
  sample->add_option("--beam", so.beam, "beam size (1: greedy)");
  sample->add_option("--seed", so.seed);
  sample->add_option("--temperature", so.temperature);

  std::string ckpt_path, source, target;
  auto* post = app.add_subcommand("posterior", "infer which source tokens a target covers");
  post->add_option("--checkpoint", ckpt_path)->required();
  post->add_option("--source", source)->required();
  post->add_option("--target", target)->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "serve the /v1 JSON API");
  serve_cmd->add_option("--checkpoint", ckpt_path)->required();
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);

  std::string grammar, corpus_out;
  std::size_t size = 1000;
  std::uint64_t seed = 1;
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus file");
  synth->add_option("--grammar", grammar, "grammar JSON (default: built-in)");
  synth->add_option("--size", size);
  synth->add_option("--seed", seed);
  synth->add_option("--out", corpus_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cli_train(load_run_config(config), out);
    if (*evaluate) return cli_eval(load_run_config(config), out);
    if (*sample) return cli_sample(so, out);
    if (*post) return cli_posterior(ckpt_path, source, target, out);
    if (*synth) return cli_synth(grammar, size, seed, corpus_out, out);
    if (*serve_cmd) {
      InferenceService service(load_checkpoint(ckpt_path));
      out << "serving checkpoint " << service.checkpoint_id() << " on http://" << host << ":"
          << port << "/v1" << std::endl;
      if (!serve(service, host, port)) {
        err << "error: cannot listen on " << host << ":" << port << "\n";
        return kExitConfig;
      }
      return kExitOk;
    }
  } catch (const NonFiniteLoss& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const AllMaskedError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace selectgen::cli
