#include "ccg/textmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ccg/errors.hpp"

namespace ccg {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Parses one "<digits>.<d>" number off the front of `s`; returns it in bucket units.
long take_number(std::string& s, double bucket, const std::string& full) {
  const auto decimals = static_cast<std::size_t>(std::max(1, static_cast<int>(std::ceil(-std::log10(bucket) - 1e-9))));
  const auto dot = s.find('.');
  if (dot == std::string::npos || dot == 0 || s.size() < dot + 1 + decimals ||
      s.find('.', dot + 1) < dot + 1 + decimals) {
    throw ParseError("malformed number in report", full);
  }
  const std::string text = s.substr(0, dot + 1 + decimals);
  s.erase(0, text.size());
  return std::lround(std::stod(text) / bucket);
}

}  // namespace

std::string to_string(Trend t) {
  switch (t) {
    case Trend::Rising: return "rising";
    case Trend::Stable: return "stable";
    case Trend::Falling: return "falling";
  }
  return "?";
}

double rouge_l(std::span<const std::size_t> candidate, std::span<const std::size_t> reference) {
  if (candidate.empty() || reference.empty()) throw InvalidArgument("ROUGE-L needs non-empty sequences");
  std::vector<std::size_t> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
  for (std::size_t i = 1; i <= candidate.size(); ++i) {
    for (std::size_t j = 1; j <= reference.size(); ++j)
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const auto lcs = static_cast<double>(prev[reference.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
  return rouge_l(std::span<const std::size_t>(candidate.indices), std::span<const std::size_t>(reference.indices));
}

double similarity_to_set(const std::vector<TokenSequence>& set, const TokenSequence& candidate) {
  double best = kNegInf;
  for (const auto& m : set) best = std::max(best, rouge_l(candidate, m));
  return best;
}

ReportFacts extract_facts(const TokenSequence& report, const PolicyParams& params, const Vocabulary& vocab) {
  const std::string full = render_tokens(report, vocab);
  const auto& idx = report.indices;
  const TokenGroup head[] = {TokenGroup::Template, TokenGroup::ReportSched, TokenGroup::Syn1, TokenGroup::Syn2,
                             TokenGroup::Syn3};
  constexpr std::size_t kHead = std::size(head);
  if (!report.terminated || idx.size() < kHead + 2 || idx.back() != vocab.eos())
    throw ParseError("report is not a complete sequence", full);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= vocab.size()) throw ParseError("token index out of range", full);
    const TokenGroup expected = i < kHead                 ? head[i]
                                : i + 1 == idx.size()     ? TokenGroup::Eos
                                : i + 2 == idx.size()     ? TokenGroup::Trend
                                                          : TokenGroup::Digit;
    if (vocab.group(idx[i]) != expected) throw ParseError("report token out of grammar", vocab.text(idx[i]));
  }

  ReportFacts f;
  f.scheduler = vocab.text(idx[1]) == "rs:PF" ? Scheduler::PF : Scheduler::RR;
  std::string digits;
  for (std::size_t i = kHead; i + 2 < idx.size(); ++i) digits += vocab.text(idx[i]);
  f.throughput_bucket = take_number(digits, params.throughput_bucket, full);
  f.delay_bucket = take_number(digits, params.delay_bucket, full);
  if (!digits.empty()) throw ParseError("trailing digits in report", full);
  const std::string& trend = vocab.text(idx[idx.size() - 2]);
  f.trend = trend == "rising" ? Trend::Rising : trend == "falling" ? Trend::Falling : Trend::Stable;
  f.throughput_below_floor = static_cast<double>(f.throughput_bucket) * params.throughput_bucket < kThroughputFloorMbps;
  f.delay_above_ceiling = static_cast<double>(f.delay_bucket) * params.delay_bucket > kDelayCeilingMs;
  return f;
}

double quality_score(const SlotPolicy& policy, const PromptSpec& x_prime, const CounterfactualOutcome& candidate) {
  const auto ctx = PolicyContext::for_report(x_prime.slots, candidate.action, summarize_kpis(candidate.kpis));
  if (candidate.report.indices.empty()) return kNegInf;
  return sequence_loglik(policy, ctx, candidate.report);
}

bool admission(const ReportFacts& c, const ReportFacts& r, const AdmissionRule& rule) {
  const auto ordinal = [](Trend t) { return t == Trend::Falling ? -1 : t == Trend::Stable ? 0 : 1; };
  if (c.scheduler != r.scheduler || std::abs(ordinal(c.trend) - ordinal(r.trend)) > rule.trend_steps) return false;
  const auto within = [&rule](long a, long b) {
    const double tol = std::max(static_cast<double>(rule.bucket_tolerance),
                                rule.relative_tolerance * static_cast<double>(std::abs(b)));
    return static_cast<double>(std::abs(a - b)) <= tol + 1e-9;
  };
  return within(c.throughput_bucket, r.throughput_bucket) && within(c.delay_bucket, r.delay_bucket);
}

bool admission(const TokenSequence& candidate, const TokenSequence& reference, const AdmissionRule& rule,
               const PolicyParams& params) {
  return admission(extract_facts(candidate, params), extract_facts(reference, params), rule);
}

double confidence(std::span<const double> qualities) {
  double best = kNegInf;
  for (double q : qualities) best = std::max(best, q);
  return best;
}

}  // namespace ccg
