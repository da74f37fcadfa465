#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "softshield/baselines.hpp"
#include "softshield/checkpoint.hpp"
#include "softshield/corpus.hpp"
#include "softshield/errors.hpp"
#include "softshield/eval.hpp"
#include "softshield/model.hpp"
#include "softshield/shield.hpp"
#include "softshield/tokenizer.hpp"

namespace softshield::cli {

namespace {

using nlohmann::json;

// Flat JSON object as a CLI11 config source: {"steps": 500, "lr": 0.001}.
// Command-line flags win over config values (CLI11 default precedence).
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::parse_error& e) {
      throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::FileError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }
};

void attach_config(CLI::App* sub) {
  sub->set_config("--config", "", "JSON file with flag defaults (flags win)");
  sub->config_formatter(std::make_shared<JsonConfig>());
}

void progress(const std::string& what, int step, int total, float loss) {
  if (step % 100 == 0 || step + 1 == total) {
    std::cerr << what << " step " << (step + 1) << "/" << total << " loss " << loss
              << "\n";
  }
}

// ------------------------------------------------------------- subcommands

struct GenCorpusArgs {
  uint64_t seed = 0;
  std::string out;
  CorpusSpec spec;
};

int run_gen_corpus(const GenCorpusArgs& a) {
  CorpusSpec spec = a.spec;
  spec.seed = a.seed;
  std::cerr << "generating corpus (seed " << spec.seed << ") into " << a.out << "\n";
  const Corpus corpus = gen_corpus(spec);
  save_corpus(a.out, corpus, spec);
  json summary{{"n_eval_attacked", corpus.eval_attacked.size()},
               {"n_eval_clean", corpus.eval_clean.size()},
               {"n_pretrain", corpus.pretrain.size()},
               {"n_quadruples_train", corpus.train_quads.size()},
               {"out", a.out}};
  std::cout << summary.dump() << "\n";
  return 0;
}

struct PretrainArgs {
  std::string corpus_dir;
  std::string out;
  uint64_t seed = 0;
  Hyper hyper;
  ModelConfig config;
};

int run_pretrain(const PretrainArgs& a) {
  const std::vector<TextPair> pairs =
      load_text_pairs((std::filesystem::path(a.corpus_dir) / "pretrain.jsonl").string());
  Hyper hyper = a.hyper;
  hyper.seed = a.seed;
  Parameters params = init_params(a.config, a.seed);
  std::cerr << "pretraining " << params.param_count() << " parameters for " << hyper.steps
            << " steps\n";
  const std::vector<float> log = pretrain(
      params, pairs, hyper,
      [&](int step, float loss) { progress("pretrain", step, hyper.steps, loss); });
  save_model(a.out, params);
  json summary{{"final_loss", log.empty() ? 0.0 : double(log.back())},
               {"out", a.out},
               {"steps", hyper.steps}};
  std::cout << summary.dump() << "\n";
  return 0;
}

struct TrainShieldArgs {
  std::string model_path;
  std::string corpus_dir;
  std::string kind = "all";
  int m = 16;
  std::string init = "text";
  uint64_t seed = 0;
  std::string out;
  ShieldHyper hyper;
};

int run_train_shield(const TrainShieldArgs& a) {
  const Parameters params = load_model(a.model_path);
  const std::vector<Quadruple> quads = load_quadruples(
      (std::filesystem::path(a.corpus_dir) / "quads_train.jsonl").string());
  ShieldHyper hyper = a.hyper;
  hyper.seed = a.seed;
  hyper.init_mode = a.init == "gaussian" ? ShieldHyper::Init::gaussian : ShieldHyper::Init::text;

  std::optional<AttackKind> filter;
  std::string label = "generic";
  if (a.kind != "all") {
    filter = attack_kind_from_string(a.kind);
    label = a.kind;
  }
  SoftPrompt prompt = init_soft_prompt(a.m, params, hyper.init_mode, a.seed);
  prompt.label = label;
  std::cerr << "training soft prompt '" << label << "' (" << a.m << " rows) for "
            << hyper.steps << " steps\n";
  const std::vector<float> log = train_soft_prompt(
      params, prompt, quads, hyper, filter,
      [&](int step, float loss) { progress("train-shield", step, hyper.steps, loss); });
  save_soft_prompt(a.out, prompt);
  json summary{{"final_loss", log.empty() ? 0.0 : double(log.back())},
               {"label", label},
               {"out", a.out},
               {"steps", hyper.steps}};
  std::cout << summary.dump() << "\n";
  return 0;
}

struct TrainRouterArgs {
  std::string corpus_dir;
  uint64_t seed = 0;
  std::string out;
  RouterHyper hyper;
};

int run_train_router(const TrainRouterArgs& a) {
  const std::vector<Quadruple> quads = load_quadruples(
      (std::filesystem::path(a.corpus_dir) / "quads_train.jsonl").string());
  std::vector<RouterExample> examples;
  examples.reserve(quads.size() * 2);
  for (const Quadruple& q : quads) {
    examples.push_back({q.clean_prompt, 0});
    examples.push_back({q.corrupted_prompt, 1 + int(q.attack_kind)});
  }
  RouterHyper hyper = a.hyper;
  hyper.seed = a.seed;
  std::cerr << "training router on " << examples.size() << " examples\n";
  const Router router = train_router(examples, hyper);
  save_router(a.out, router);
  json summary{{"held_out_accuracy", router.held_out_accuracy}, {"out", a.out}};
  std::cout << summary.dump() << "\n";
  return 0;
}

struct EvalArgs {
  std::string model_path;
  std::string defense = "none";
  std::vector<std::string> shield_paths;
  std::string router_path;
  std::string corpus_dir;
  std::string report_path;
  int threads = 0;
  int max_new = 64;
  std::string fuse_mode = "concat";
};

DefenseMode parse_defense_flag(const std::string& s) {
  if (s == "none") return DefenseMode::none;
  if (s == "begging") return DefenseMode::begging;
  if (s == "ppl-filter") return DefenseMode::ppl_filter;
  if (s == "soft-generic") return DefenseMode::soft_generic;
  if (s == "soft-routed") return DefenseMode::soft_specialist_routed;
  if (s == "soft-fused") return DefenseMode::soft_fused;
  throw ConfigError("unknown defense '" + s + "'");
}

int run_eval(const EvalArgs& a) {
  const Parameters params = load_model(a.model_path);
  const std::filesystem::path base(a.corpus_dir);
  const std::vector<TaskInstance> eval_clean =
      load_task_instances((base / "eval_clean.jsonl").string());
  const std::vector<Quadruple> eval_attacked =
      load_quadruples((base / "eval_attacked.jsonl").string());
  const CorpusSpec spec = load_corpus_spec(a.corpus_dir);

  Defense defense;
  defense.config.mode = parse_defense_flag(a.defense);
  defense.config.shield_paths = a.shield_paths;
  defense.config.router_path = a.router_path;

  switch (defense.config.mode) {
    case DefenseMode::none:
    case DefenseMode::begging:
      break;
    case DefenseMode::ppl_filter: {
      const std::vector<Quadruple> quads =
          load_quadruples((base / "quads_train.jsonl").string());
      std::vector<std::string> clean, corrupted;
      clean.reserve(quads.size());
      corrupted.reserve(quads.size());
      for (const Quadruple& q : quads) {
        clean.push_back(q.clean_prompt);
        corrupted.push_back(q.corrupted_prompt);
      }
      std::cerr << "calibrating perplexity filter on " << quads.size() << " quadruples\n";
      defense.filter = calibrate_ppl_filter(params, clean, corrupted, a.threads);
      break;
    }
    case DefenseMode::soft_generic: {
      if (a.shield_paths.size() != 1) {
        throw ConfigError("soft-generic needs exactly one --shield");
      }
      defense.prompt = load_soft_prompt(a.shield_paths[0]);
      break;
    }
    case DefenseMode::soft_fused: {
      if (a.shield_paths.empty()) throw ConfigError("soft-fused needs --shield paths");
      std::vector<SoftPrompt> parts;
      parts.reserve(a.shield_paths.size());
      for (const std::string& p : a.shield_paths) parts.push_back(load_soft_prompt(p));
      defense.prompt = a.fuse_mode == "mean" ? fuse_mean(parts)
                                             : fuse(parts, params.config.context_len);
      break;
    }
    case DefenseMode::soft_specialist_routed: {
      if (a.router_path.empty()) throw ConfigError("soft-routed needs --router");
      if (a.shield_paths.empty()) throw ConfigError("soft-routed needs --shield paths");
      defense.router = load_router(a.router_path);
      for (const std::string& p : a.shield_paths) {
        SoftPrompt sp = load_soft_prompt(p);
        const AttackKind kind = attack_kind_from_string(sp.label);
        defense.specialists.emplace(kind, std::move(sp));
      }
      break;
    }
  }

  std::cerr << "evaluating defense '" << a.defense << "' on " << eval_clean.size()
            << " clean / " << eval_attacked.size() << " attacked examples\n";
  const EvalReport report =
      evaluate(params, defense, eval_clean, eval_attacked, spec.seed, a.threads, a.max_new);
  if (!a.report_path.empty()) write_report(report, a.report_path);
  std::cout << report_to_json(report) << "\n";
  return 0;
}

struct DemoArgs {
  std::string model_path;
  std::string shield_path;
  std::string prompt;
  int max_new = 64;
};

int run_demo(const DemoArgs& a) {
  const Parameters params = load_model(a.model_path);
  std::optional<SoftPrompt> shield;
  if (!a.shield_path.empty()) {
    shield = load_soft_prompt(a.shield_path);
    if (shield->config_hash != params.config.hash()) {
      throw CompatError("soft prompt does not match the model config");
    }
  }
  const std::vector<int> out =
      generate(params, encode(a.prompt), shield ? &shield->matrix : nullptr, a.max_new);
  std::cout << decode(out) << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"soft prompt injection-defense laboratory"};
  app.require_subcommand(1);

  GenCorpusArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
  gen->add_option("--seed", gen_args.seed, "RNG seed")->required();
  gen->add_option("--out", gen_args.out, "output directory")->required();
  gen->add_option("--n-pretrain", gen_args.spec.n_pretrain, "pretraining pairs");
  gen->add_option("--n-quads", gen_args.spec.n_quadruples_train, "training quadruples");
  gen->add_option("--n-eval-clean", gen_args.spec.n_eval_clean, "clean eval examples");
  gen->add_option("--n-eval-attacked", gen_args.spec.n_eval_attacked, "attacked eval examples");
  gen->add_option("--obey-fraction", gen_args.spec.obey_fraction,
                  "share of obey-injection pairs in pretraining");
  attach_config(gen);

  PretrainArgs pre_args;
  CLI::App* pre = app.add_subcommand("pretrain", "train the base model");
  pre->add_option("--corpus", pre_args.corpus_dir, "corpus directory")->required();
  pre->add_option("--seed", pre_args.seed, "RNG seed")->required();
  pre->add_option("--steps", pre_args.hyper.steps, "optimizer steps");
  pre->add_option("--lr", pre_args.hyper.learning_rate, "learning rate");
  pre->add_option("--batch", pre_args.hyper.batch_size, "batch size");
  pre->add_option("--grad-clip", pre_args.hyper.grad_clip_norm, "gradient norm clip");
  pre->add_option("--out", pre_args.out, "model checkpoint path")->required();
  pre->add_option("--layers", pre_args.config.n_layers, "transformer layers");
  pre->add_option("--d-model", pre_args.config.d_model, "model width");
  pre->add_option("--heads", pre_args.config.n_heads, "attention heads");
  pre->add_option("--d-ff", pre_args.config.d_ff, "MLP width");
  pre->add_option("--context", pre_args.config.context_len, "context length");
  attach_config(pre);

  TrainShieldArgs shield_args;
  CLI::App* shd = app.add_subcommand("train-shield", "train a soft prompt");
  shd->add_option("--model", shield_args.model_path, "model checkpoint")->required();
  shd->add_option("--corpus", shield_args.corpus_dir, "corpus directory")->required();
  shd->add_option("--kind", shield_args.kind, "all|direct|indirect|jailbreak")
      ->check(CLI::IsMember({"all", "direct", "indirect", "jailbreak"}));
  shd->add_option("--m", shield_args.m, "virtual token count");
  shd->add_option("--steps", shield_args.hyper.steps, "optimizer steps");
  shd->add_option("--lr", shield_args.hyper.learning_rate, "learning rate");
  shd->add_option("--batch", shield_args.hyper.batch_size, "batch size");
  shd->add_option("--clean-mix", shield_args.hyper.clean_mix, "clean pair share per batch");
  shd->add_option("--init", shield_args.init, "text|gaussian")
      ->check(CLI::IsMember({"text", "gaussian"}));
  shd->add_option("--seed", shield_args.seed, "RNG seed")->required();
  shd->add_option("--out", shield_args.out, "soft prompt checkpoint path")->required();
  attach_config(shd);

  TrainRouterArgs router_args;
  CLI::App* rtr = app.add_subcommand("train-router", "train the threat-kind router");
  rtr->add_option("--corpus", router_args.corpus_dir, "corpus directory")->required();
  rtr->add_option("--seed", router_args.seed, "RNG seed")->required();
  rtr->add_option("--out", router_args.out, "router checkpoint path")->required();
  rtr->add_option("--steps", router_args.hyper.steps, "gradient descent steps");
  rtr->add_option("--lr", router_args.hyper.learning_rate, "learning rate");
  rtr->add_option("--holdout", router_args.hyper.holdout_fraction, "held-out fraction");
  attach_config(rtr);

  EvalArgs eval_args;
  CLI::App* evl = app.add_subcommand("eval", "run the evaluation harness");
  evl->add_option("--model", eval_args.model_path, "model checkpoint")->required();
  evl->add_option("--defense", eval_args.defense,
                  "none|begging|ppl-filter|soft-generic|soft-routed|soft-fused")
      ->check(CLI::IsMember(
          {"none", "begging", "ppl-filter", "soft-generic", "soft-routed", "soft-fused"}))
      ->required();
  evl->add_option("--shield", eval_args.shield_paths, "soft prompt checkpoint(s)");
  evl->add_option("--router", eval_args.router_path, "router checkpoint");
  evl->add_option("--corpus", eval_args.corpus_dir, "corpus directory")->required();
  evl->add_option("--report", eval_args.report_path, "report JSON path");
  evl->add_option("--threads", eval_args.threads, "worker threads (0 = auto)");
  evl->add_option("--max-new", eval_args.max_new, "generation budget per example");
  evl->add_option("--fuse-mode", eval_args.fuse_mode, "concat|mean")
      ->check(CLI::IsMember({"concat", "mean"}));
  attach_config(evl);

  DemoArgs demo_args;
  CLI::App* demo = app.add_subcommand("demo", "generate for one prompt");
  demo->add_option("--model", demo_args.model_path, "model checkpoint")->required();
  demo->add_option("--shield", demo_args.shield_path, "soft prompt checkpoint");
  demo->add_option("--prompt", demo_args.prompt, "prompt text")->required();
  demo->add_option("--max-new", demo_args.max_new, "generation budget");
  attach_config(demo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help lands here with exit code 0; everything else is a usage error.
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen_corpus(gen_args);
    if (pre->parsed()) return run_pretrain(pre_args);
    if (shd->parsed()) return run_train_shield(shield_args);
    if (rtr->parsed()) return run_train_router(router_args);
    if (evl->parsed()) return run_eval(eval_args);
    if (demo->parsed()) return run_demo(demo_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace softshield::cli
