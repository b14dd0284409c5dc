#pragma once
// Surrogate autoregressive token policy with Gumbel-Max sampling.
//
// Both the action generator and the report generator are slot grammars over
// one shared symbolic vocabulary. Each position has a distribution supported on
// exactly one token group; sampling is argmax(log p + Gumbel noise), so the
// recorded noise vectors replay a decode exactly under an edited context.
//
// Action:  [SCHED, UES, LOAD, DUR, EOS]
// Report:  [TEMPLATE, RSCHED, SYN1, SYN2, SYN3, <throughput digits>,
//           <delay digits>, TREND, EOS]
// Numbers are written as their 0.1-bucket in decimal ("12.3"), one token per
// character, so the number of numeric positions depends on the KPI summary.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccg/envsim.hpp"
#include "ccg/rng.hpp"

namespace ccg {

enum class TokenGroup { Sched, Ues, Load, Dur, Template, ReportSched, Syn1, Syn2, Syn3, Digit, Trend, Eos };

std::string to_string(TokenGroup g);

class Vocabulary {
 public:
  struct Entry {
    std::string text;
    TokenGroup group;
  };

  explicit Vocabulary(std::vector<Entry> entries);

  std::size_t size() const { return entries_.size(); }
  const std::string& text(std::size_t index) const { return entries_.at(index).text; }
  TokenGroup group(std::size_t index) const { return entries_.at(index).group; }
  // Throws InvalidArgument for unknown tokens.
  std::size_t index_of(const std::string& text) const;
  const std::vector<std::size_t>& members(TokenGroup g) const;
  std::size_t eos() const { return eos_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<TokenGroup, std::vector<std::size_t>> members_;
  std::size_t eos_ = 0;
};

// The vocabulary shared by the action and report generators.
const Vocabulary& default_vocabulary();

struct TokenDistribution {
  std::vector<double> probs;

  // Entries non-negative and summing to 1 within 1e-9.
  void validate() const;
};

struct GumbelNoiseVector {
  std::vector<double> noise;
};

enum class TraceRole { Action, Report };

struct GumbelTrace {
  TraceRole role = TraceRole::Action;
  std::vector<GumbelNoiseVector> steps;  // steps[i] drives position i

  std::size_t size() const { return steps.size(); }
  friend bool operator==(const GumbelTrace& a, const GumbelTrace& b);
};

struct TokenSequence {
  std::vector<std::size_t> indices;
  bool terminated = false;

  std::size_t size() const { return indices.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// Slots an operator may fix in a prompt; unset slots fall back to the policy prior.
struct PromptSlots {
  std::optional<Scheduler> scheduler;
  std::optional<int> num_ues;
  std::optional<int> load_mbps;
  std::optional<int> duration_s;

  friend bool operator==(const PromptSlots&, const PromptSlots&) = default;
};

struct PolicyContext {
  enum class Kind { Action, Report };

  Kind kind = Kind::Action;
  PromptSlots prompt;
  // Present (and required) for report contexts.
  std::optional<ActionConfig> action;
  std::optional<KpiSummary> kpis;

  static PolicyContext for_action(const PromptSlots& prompt);
  static PolicyContext for_report(const PromptSlots& prompt, const ActionConfig& action, const KpiSummary& kpis);
};

struct PolicyParams {
  double eta = 0.05;  // mass spread off a slot value fixed by the prompt

  // Priors for unspecified action slots, indexed in group order.
  std::vector<double> sched_prior{0.3, 0.7};                                      // RR, PF
  std::vector<double> ues_prior{0.0857, 0.0857, 0.4, 0.0857, 0.0857, 0.0857, 0.0857, 0.0858};  // 3..10
  std::vector<double> load_prior{0.075, 0.075, 0.075, 0.4, 0.075, 0.075, 0.075, 0.075, 0.075};  // 2..10
  std::vector<double> dur_prior{0.4, 0.12, 0.12, 0.12, 0.12, 0.12};               // 5..10

  // Fixed lexical distributions of the report generator.
  std::vector<double> template_probs{0.4, 0.3, 0.2, 0.1};
  std::vector<double> syn1_probs{0.5, 0.3, 0.2};
  std::vector<double> syn2_probs{0.6, 0.3, 0.1};
  std::vector<double> syn3_probs{0.5, 0.5};

  double throughput_bucket = 0.1;  // Mbps
  double delay_bucket = 0.1;       // ms
  double trend_deadband = 0.01;    // relative slope per second

  std::size_t max_decode_length = 64;
};

// Decimal rendering of the 0.1-bucket of a non-negative value, e.g. 4.97 -> "5.0".
std::string bucket_string(double value, double bucket);

// Slot layout of the report grammar for one context: the group each position draws from.
std::vector<TokenGroup> report_layout(const PolicyContext& ctx, const PolicyParams& params);

class SlotPolicy {
 public:
  explicit SlotPolicy(PolicyParams params = {}, const Vocabulary& vocab = default_vocabulary());

  const Vocabulary& vocabulary() const { return *vocab_; }
  const PolicyParams& params() const { return params_; }

  // Distribution of the token at position prefix.size().
  // Throws InvalidState when the prefix does not follow the slot grammar.
  TokenDistribution next_distribution(const PolicyContext& ctx, const TokenSequence& prefix) const;
  // Same, with an explicit position that must equal prefix.size().
  TokenDistribution next_distribution(const PolicyContext& ctx, std::size_t position,
                                      const TokenSequence& prefix) const;

  nlohmann::json to_json() const;
  static SlotPolicy from_json(const nlohmann::json& j);

 private:
  std::vector<double> slot_values(const PolicyContext& ctx, std::size_t position) const;

  PolicyParams params_;
  const Vocabulary* vocab_;
};

GumbelNoiseVector sample_gumbel_vector(Rng& rng, std::size_t vocab_size);

// argmax_v log p[v] + noise[v]; zero-probability entries never win; ties to the lowest index.
std::size_t gumbel_max_select(const TokenDistribution& dist, const GumbelNoiseVector& noise);

struct DecodeResult {
  TokenSequence sequence;
  GumbelTrace trace;
};

// Autoregressive decode. Position i reuses trace->steps[i] when present and
// draws a fresh vector from rng otherwise; the returned trace covers the output.
// Throws TruncatedOutput (carrying the partial sequence) at max length without EOS.
DecodeResult decode_with_trace(const SlotPolicy& policy, const PolicyContext& ctx, const GumbelTrace* trace,
                               Rng& rng);

// (1/len) sum log P(token_i | ctx, prefix); -inf when any token is impossible.
double sequence_loglik(const SlotPolicy& policy, const PolicyContext& ctx, const TokenSequence& seq);

// Action tokens -> configuration.
ActionConfig action_from_tokens(const TokenSequence& seq, const Vocabulary& vocab = default_vocabulary());

// Human-readable report text for a report token sequence.
std::string render_report_text(const TokenSequence& seq, const Vocabulary& vocab = default_vocabulary());

std::string render_tokens(const TokenSequence& seq, const Vocabulary& vocab = default_vocabulary());

void to_json(nlohmann::json& j, const TokenSequence& s);
void from_json(const nlohmann::json& j, TokenSequence& s);
void to_json(nlohmann::json& j, const GumbelTrace& t);
void from_json(const nlohmann::json& j, GumbelTrace& t);
void to_json(nlohmann::json& j, const PromptSlots& s);
void from_json(const nlohmann::json& j, PromptSlots& s);

}  // namespace ccg
