#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "softshield/model.hpp"
#include "softshield/rng.hpp"

namespace softshield {

enum class TaskKind { echo, rev, upper, get };
enum class AttackKind { direct, indirect, jailbreak };

const char* to_string(TaskKind k);
const char* to_string(AttackKind k);
TaskKind task_kind_from_string(const std::string& s);
AttackKind attack_kind_from_string(const std::string& s);

// Fixed keyword sentinel per attack kind; uppercase so it can never appear
// in the lowercase task alphabet.
const char* keyword_for(AttackKind k);

struct TaskInstance {
  TaskKind task_kind;
  std::string prompt;        // "TASK:<kind>\nDATA:<payload>\n"
  std::string clean_output;  // deterministic ground truth for prompt
};

struct AttackTemplate {
  AttackKind attack_kind;
  std::string keyword;
};

AttackTemplate attack_template(AttackKind k);

struct Quadruple {
  std::string clean_prompt;
  std::string corrupted_prompt;
  std::string clean_output;
  std::string corrupted_output;
  AttackKind attack_kind;
  std::string keyword;
};

struct CorpusSpec {
  uint64_t seed = 0;
  int n_pretrain = 4000;
  int n_quadruples_train = 2000;
  int n_eval_clean = 500;
  int n_eval_attacked = 600;
  std::array<double, 3> attack_mix = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  double obey_fraction = 0.3;

  void validate() const;
};

struct Corpus {
  std::vector<TextPair> pretrain;
  std::vector<Quadruple> train_quads;
  std::vector<TaskInstance> eval_clean;
  std::vector<Quadruple> eval_attacked;
};

TaskInstance gen_task(TaskKind kind, Rng& rng);
Quadruple apply_attack(const TaskInstance& instance, const AttackTemplate& tmpl);

// Pretrain set mixes clean pairs with an exact obey_fraction share of
// corrupted (corrupted_prompt -> keyword) pairs, which is what makes the
// base model vulnerable in the first place. Eval payload words never occur
// in the training sets.
Corpus gen_corpus(const CorpusSpec& spec);

// ---- JSONL persistence (UTF-8, sorted keys, \n line endings) ----

void save_jsonl(const std::string& path, const std::vector<Quadruple>& records);
void save_jsonl(const std::string& path, const std::vector<TaskInstance>& records);
void save_jsonl(const std::string& path, const std::vector<TextPair>& records);
std::vector<Quadruple> load_quadruples(const std::string& path);
std::vector<TaskInstance> load_task_instances(const std::string& path);
std::vector<TextPair> load_text_pairs(const std::string& path);

// Writes pretrain.jsonl, quads_train.jsonl, eval_clean.jsonl,
// eval_attacked.jsonl and meta.json under dir (created if needed).
void save_corpus(const std::string& dir, const Corpus& corpus, const CorpusSpec& spec);
Corpus load_corpus(const std::string& dir);
CorpusSpec load_corpus_spec(const std::string& dir);

}  // namespace softshield
