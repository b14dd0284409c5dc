#pragma once
// Report scoring: ROUGE-L, set similarity, quality, fact extraction, admission
// and set confidence.

#include <span>
#include <vector>

#include "ccg/pipeline.hpp"
#include "ccg/policy.hpp"

namespace ccg {

// Thresholds behind the exceedance flags in ReportFacts.
inline constexpr double kThroughputFloorMbps = 5.0;
inline constexpr double kDelayCeilingMs = 15.0;

enum class Trend { Rising, Stable, Falling };

struct ReportFacts {
  Scheduler scheduler = Scheduler::PF;
  long throughput_bucket = 0;  // units of the policy's throughput bucket
  long delay_bucket = 0;
  Trend trend = Trend::Stable;
  bool throughput_below_floor = false;
  bool delay_above_ceiling = false;

  friend bool operator==(const ReportFacts&, const ReportFacts&) = default;
};

// LCS-based F-measure on token indices. Throws InvalidArgument on empty input.
double rouge_l(std::span<const std::size_t> candidate, std::span<const std::size_t> reference);
double rouge_l(const TokenSequence& candidate, const TokenSequence& reference);

// Max ROUGE-L against the members; -inf for an empty set.
double similarity_to_set(const std::vector<TokenSequence>& set, const TokenSequence& candidate);

// Throws ParseError for sequences outside the report grammar.
ReportFacts extract_facts(const TokenSequence& report, const PolicyParams& params = {},
                          const Vocabulary& vocab = default_vocabulary());

// Normalized log-likelihood of the candidate report under the report context
// built from X', the candidate's action and its KPI summary.
double quality_score(const SlotPolicy& policy, const PromptSpec& x_prime, const CounterfactualOutcome& candidate);

struct AdmissionRule {
  long bucket_tolerance = 1;
  // When positive, the tolerance grows to this fraction of the reference value.
  double relative_tolerance = 0.5;
  // Allowed distance on the ordinal scale falling < stable < rising.
  int trend_steps = 1;
};

bool admission(const TokenSequence& candidate, const TokenSequence& reference, const AdmissionRule& rule = {},
               const PolicyParams& params = {});
bool admission(const ReportFacts& candidate, const ReportFacts& reference, const AdmissionRule& rule = {});

// Max quality; -inf for an empty set.
double confidence(std::span<const double> qualities);

std::string to_string(Trend t);

}  // namespace ccg
