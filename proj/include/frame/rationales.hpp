#pragma once

// Rationale variants attached to an instance, the equivalent and
// contrastive perturbations, and serialization of simulator inputs.

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "frame/common.hpp"
#include "frame/corpus.hpp"

namespace frame {

enum class RationaleKind {
  reference,       // the predicted label itself
  pred_rationale,  // the task model's generated rationale
  gold_rationale,  // human-written rationale
  gold_label,      // the gold label used as a rationale
  perturbed_equivalent,
  perturbed_contrastive,
};

inline std::string to_string(RationaleKind k) {
  switch (k) {
    case RationaleKind::reference: return "reference";
    case RationaleKind::pred_rationale: return "pred_rationale";
    case RationaleKind::gold_rationale: return "gold_rationale";
    case RationaleKind::gold_label: return "gold_label";
    case RationaleKind::perturbed_equivalent: return "perturbed_equivalent";
    case RationaleKind::perturbed_contrastive: return "perturbed_contrastive";
  }
  return "reference";
}

inline RationaleKind parse_rationale_kind(std::string_view s) {
  for (auto k : {RationaleKind::reference, RationaleKind::pred_rationale,
                 RationaleKind::gold_rationale, RationaleKind::gold_label,
                 RationaleKind::perturbed_equivalent, RationaleKind::perturbed_contrastive}) {
    if (to_string(k) == s) return k;
  }
  throw UsageError("unknown rationale kind '" + std::string(s) + "'");
}

struct RationaleVariant {
  RationaleKind kind = RationaleKind::reference;
  std::string text;
  std::string source_instance_id;

  bool operator==(const RationaleVariant&) const = default;
};

enum class BankKind { per_class, generic_affirmation };

struct ParaphraseBank {
  BankKind kind = BankKind::per_class;
  std::map<std::string, std::vector<std::string>> per_class;  // keyed by class string
  std::vector<std::string> generic;

  // Sentences for `label` under label normalization, or nullptr.
  const std::vector<std::string>* sentences_for(std::string_view label) const {
    for (const auto& [cls, sentences] : per_class) {
      if (labels_match(cls, label)) return &sentences;
    }
    return nullptr;
  }
};

// The banks found in one bank file: a per-class bank, an affirmation bank,
// or both.
struct BankSet {
  std::optional<ParaphraseBank> per_class;
  std::optional<ParaphraseBank> affirmation;

  const ParaphraseBank* for_task(TaskKind kind) const {
    if (kind == TaskKind::closed_set) return per_class ? &*per_class : nullptr;
    return affirmation ? &*affirmation : nullptr;
  }
};

inline void validate_bank(const ParaphraseBank& bank) {
  if (bank.kind == BankKind::generic_affirmation) {
    if (bank.generic.empty()) throw DataError("affirmation bank is empty");
    return;
  }
  if (bank.per_class.empty()) throw DataError("paraphrase bank has no classes");
  for (const auto& [cls, sentences] : bank.per_class) {
    if (sentences.empty()) throw DataError("paraphrase bank entry '" + cls + "' is empty");
  }
}

// Every class of the label space must have at least one paraphrase.
inline void check_bank_covers(const ParaphraseBank& bank, const std::vector<std::string>& labels) {
  for (const auto& label : labels) {
    if (!bank.sentences_for(label)) {
      throw DataError("paraphrase bank has no entry for class '" + label + "'");
    }
  }
}

// JSONL of {"class": str|null, "sentences": [str]}; class null is the
// generic-affirmation bank.
inline BankSet parse_banks(std::istream& in, const std::string& source = "<stream>") {
  BankSet set;
  detail::for_each_jsonl_record(in, source, [&](const nlohmann::json& j, std::size_t) {
    auto sentences_it = j.find("sentences");
    if (sentences_it == j.end() || !sentences_it->is_array()) {
      throw DataError("bank record missing 'sentences' array");
    }
    std::vector<std::string> sentences;
    for (const auto& s : *sentences_it) {
      if (!s.is_string()) throw DataError("bank sentence is not a string");
      sentences.push_back(s.get<std::string>());
    }
    auto cls = detail::optional_string(j, "class");
    if (!cls) {
      if (!set.affirmation) set.affirmation = ParaphraseBank{BankKind::generic_affirmation, {}, {}};
      auto& g = set.affirmation->generic;
      g.insert(g.end(), sentences.begin(), sentences.end());
    } else {
      if (!set.per_class) set.per_class = ParaphraseBank{BankKind::per_class, {}, {}};
      auto& dst = set.per_class->per_class[*cls];
      dst.insert(dst.end(), sentences.begin(), sentences.end());
    }
  });
  if (set.per_class) validate_bank(*set.per_class);
  if (set.affirmation) validate_bank(*set.affirmation);
  if (!set.per_class && !set.affirmation) throw DataError(source + ": bank file has no entries");
  return set;
}

inline BankSet load_banks(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_banks(in, path);
}

inline BankSet merge_banks(BankSet a, const BankSet& b) {
  if (b.per_class) {
    if (!a.per_class) {
      a.per_class = b.per_class;
    } else {
      for (const auto& [cls, s] : b.per_class->per_class) {
        auto& dst = a.per_class->per_class[cls];
        dst.insert(dst.end(), s.begin(), s.end());
      }
    }
  }
  if (b.affirmation) {
    if (!a.affirmation) {
      a.affirmation = b.affirmation;
    } else {
      auto& g = a.affirmation->generic;
      g.insert(g.end(), b.affirmation->generic.begin(), b.affirmation->generic.end());
    }
  }
  return a;
}

// Five sentences per class, written against the class name only.
inline ParaphraseBank synthetic_paraphrase_bank(const std::vector<std::string>& labels) {
  ParaphraseBank bank{BankKind::per_class, {}, {}};
  for (const auto& c : labels) {
    bank.per_class[c] = {"The evidence points to " + c + ".",
                         "Everything here suggests " + c + ".",
                         "This is best described as " + c + ".",
                         "The cues favor " + c + " over the rest.",
                         "Most signs indicate " + c + "."};
  }
  return bank;
}

inline ParaphraseBank default_affirmation_bank() {
  return ParaphraseBank{BankKind::generic_affirmation,
                        {},
                        {"The following rationale is faithful: ",
                         "Here is a sound justification: ",
                         "This explanation supports the answer: ",
                         "The reasoning below is correct: ",
                         "A reliable explanation follows: "}};
}

inline std::string serialize_banks(const BankSet& set) {
  std::string out;
  if (set.per_class) {
    for (const auto& [cls, s] : set.per_class->per_class) {
      nlohmann::ordered_json j;
      j["class"] = cls;
      j["sentences"] = s;
      out += j.dump() + "\n";
    }
  }
  if (set.affirmation) {
    nlohmann::ordered_json j;
    j["class"] = nullptr;
    j["sentences"] = set.affirmation->generic;
    out += j.dump() + "\n";
  }
  return out;
}

// --- variants -------------------------------------------------------------

inline RationaleVariant make_variant(const TaskInstance& instance, const TaskPrediction& prediction,
                                     RationaleKind kind) {
  RationaleVariant v{kind, {}, instance.id};
  switch (kind) {
    case RationaleKind::reference:
      v.text = prediction.pred_label;
      break;
    case RationaleKind::gold_label:
      v.text = instance.gold_label;
      break;
    case RationaleKind::pred_rationale:
      if (!prediction.pred_rationale) {
        throw DataError("instance '" + instance.id + "' has no predicted rationale");
      }
      v.text = *prediction.pred_rationale;
      break;
    case RationaleKind::gold_rationale:
      if (!instance.gold_rationale) {
        throw DataError("instance '" + instance.id + "' has no gold rationale");
      }
      v.text = *instance.gold_rationale;
      break;
    case RationaleKind::perturbed_equivalent:
    case RationaleKind::perturbed_contrastive:
      throw std::invalid_argument("perturbed variants are built by the perturb_* functions");
  }
  return v;
}

// Replaces a label rationale by one of its class's paraphrases.
inline RationaleVariant perturb_equivalent_closed_set(const RationaleVariant& variant,
                                                      const ParaphraseBank& bank,
                                                      std::uint64_t seed) {
  if (bank.kind != BankKind::per_class) throw DataError("closed-set perturbation needs a per-class bank");
  const auto* sentences = bank.sentences_for(variant.text);
  if (!sentences || sentences->empty()) {
    throw DataError("paraphrase bank has no entry for class '" + variant.text + "'");
  }
  Rng rng(mix_seed(seed, "equivalent"));
  return {RationaleKind::perturbed_equivalent, (*sentences)[rng.index(sentences->size())],
          variant.source_instance_id};
}

// Prepends a generic affirmation; the original text survives as a suffix.
inline RationaleVariant perturb_equivalent_multi_choice(const RationaleVariant& variant,
                                                        const ParaphraseBank& bank,
                                                        std::uint64_t seed) {
  if (bank.generic.empty()) throw DataError("affirmation bank is empty");
  Rng rng(mix_seed(seed, "equivalent"));
  std::string s = bank.generic[rng.index(bank.generic.size())];
  if (!s.empty() && !std::isspace(static_cast<unsigned char>(s.back()))) s += ' ';
  return {RationaleKind::perturbed_equivalent, s + variant.text, variant.source_instance_id};
}

inline RationaleVariant perturb_equivalent(const RationaleVariant& variant, const TaskInstance& instance,
                                           const ParaphraseBank& bank, std::uint64_t seed) {
  return instance.task_kind == TaskKind::closed_set
             ? perturb_equivalent_closed_set(variant, bank, seed)
             : perturb_equivalent_multi_choice(variant, bank, seed);
}

// Swaps the label rationale for one of the other choices.
inline RationaleVariant perturb_contrastive(const RationaleVariant& variant, const TaskInstance& instance,
                                            std::uint64_t seed) {
  std::vector<const std::string*> others;
  for (const auto& c : instance.choices) {
    if (!labels_match(c, variant.text)) others.push_back(&c);
  }
  if (instance.choices.size() < 2 || others.empty()) {
    throw DataError("instance '" + instance.id + "' has no alternative choice to contrast with");
  }
  Rng rng(mix_seed(seed, "contrastive"));
  return {RationaleKind::perturbed_contrastive, *others[rng.index(others.size())],
          variant.source_instance_id};
}

// --- simulator inputs -----------------------------------------------------

inline constexpr std::string_view kExplanationMarker = "explanation:";
inline constexpr std::string_view kChoicesMarker = "choices:";

inline std::string compose_control_input(const TaskInstance& instance) {
  std::string out = instance.input_text;
  if (instance.task_kind == TaskKind::multi_choice) {
    out += " ";
    out += kChoicesMarker;
    out += " " + join(instance.choices, " | ");
  }
  return out;
}

// "<input> explanation: <rationale>", with a "choices: a | b" segment
// before the marker for multi-choice instances.
inline std::string compose_treatment_input(const TaskInstance& instance, const RationaleVariant& variant) {
  std::string out = compose_control_input(instance);
  out += " ";
  out += kExplanationMarker;
  out += " " + variant.text;
  return out;
}

}  // namespace frame
