#include "ccg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "ccg/errors.hpp"

namespace ccg {
namespace {

constexpr int kPolicyJsonVersion = 1;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

const std::vector<TokenGroup> kActionLayout{TokenGroup::Sched, TokenGroup::Ues, TokenGroup::Load, TokenGroup::Dur,
                                            TokenGroup::Eos};

std::vector<Vocabulary::Entry> default_entries() {
  std::vector<Vocabulary::Entry> e;
  e.push_back({"sched:RR", TokenGroup::Sched});
  e.push_back({"sched:PF", TokenGroup::Sched});
  for (int n = kMinUes; n <= kMaxUes; ++n) e.push_back({"ues:" + std::to_string(n), TokenGroup::Ues});
  for (int l = 2; l <= 10; ++l) e.push_back({"load:" + std::to_string(l), TokenGroup::Load});
  for (int d = 5; d <= 10; ++d) e.push_back({"dur:" + std::to_string(d), TokenGroup::Dur});
  for (int t = 0; t < 4; ++t) e.push_back({"tpl:" + std::to_string(t), TokenGroup::Template});
  e.push_back({"rs:RR", TokenGroup::ReportSched});
  e.push_back({"rs:PF", TokenGroup::ReportSched});
  for (const char* w : {"achieved", "delivered", "sustained"}) e.push_back({w, TokenGroup::Syn1});
  for (const char* w : {"throughput", "data rate", "goodput"}) e.push_back({w, TokenGroup::Syn2});
  for (const char* w : {"delay", "latency"}) e.push_back({w, TokenGroup::Syn3});
  for (const char* w : {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "."}) e.push_back({w, TokenGroup::Digit});
  for (const char* w : {"rising", "stable", "falling"}) e.push_back({w, TokenGroup::Trend});
  e.push_back({"<eos>", TokenGroup::Eos});
  return e;
}

int bucket_decimals(double bucket) {
  return std::max(0, static_cast<int>(std::ceil(-std::log10(bucket) - 1e-9)));
}

std::size_t trend_offset(const PolicyContext& ctx, const PolicyParams& params) {
  const double r = ctx.kpis->throughput_rel_slope;
  if (r > params.trend_deadband) return 0;
  if (r < -params.trend_deadband) return 2;
  return 1;
}

void require_report_payload(const PolicyContext& ctx) {
  if (!ctx.action || !ctx.kpis) throw InvalidState("report context without action config and KPI summary");
}

std::vector<double> one_hot(std::size_t n, std::size_t k) {
  std::vector<double> v(n, 0.0);
  v.at(k) = 1.0;
  return v;
}

std::vector<double> smoothed(std::size_t n, std::size_t k, double eta) {
  if (n == 1) return {1.0};
  std::vector<double> v(n, eta / static_cast<double>(n - 1));
  v.at(k) = 1.0 - eta;
  return v;
}

std::size_t slot_index(int value, int lo, int hi, const char* what) {
  if (value < lo || value > hi) {
    throw InvalidArgument(std::string(what) + " " + std::to_string(value) + " outside [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
  }
  return static_cast<std::size_t>(value - lo);
}

std::string group_text(const TokenSequence& seq, const Vocabulary& vocab, TokenGroup g) {
  for (std::size_t idx : seq.indices)
    if (vocab.group(idx) == g) return vocab.text(idx);
  return {};
}

}  // namespace

std::string to_string(TokenGroup g) {
  switch (g) {
    case TokenGroup::Sched: return "sched";
    case TokenGroup::Ues: return "ues";
    case TokenGroup::Load: return "load";
    case TokenGroup::Dur: return "dur";
    case TokenGroup::Template: return "template";
    case TokenGroup::ReportSched: return "report_sched";
    case TokenGroup::Syn1: return "syn1";
    case TokenGroup::Syn2: return "syn2";
    case TokenGroup::Syn3: return "syn3";
    case TokenGroup::Digit: return "digit";
    case TokenGroup::Trend: return "trend";
    case TokenGroup::Eos: return "eos";
  }
  return "?";
}

Vocabulary::Vocabulary(std::vector<Entry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw InvalidArgument("empty vocabulary");
  bool have_eos = false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!index_.emplace(entries_[i].text, i).second) throw InvalidArgument("duplicate token " + entries_[i].text);
    members_[entries_[i].group].push_back(i);
    if (entries_[i].group == TokenGroup::Eos) {
      eos_ = i;
      have_eos = true;
    }
  }
  if (!have_eos) throw InvalidArgument("vocabulary without EOS");
}

std::size_t Vocabulary::index_of(const std::string& text) const {
  auto it = index_.find(text);
  if (it == index_.end()) throw InvalidArgument("unknown token '" + text + "'");
  return it->second;
}

const std::vector<std::size_t>& Vocabulary::members(TokenGroup g) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = members_.find(g);
  return it == members_.end() ? kEmpty : it->second;
}

const Vocabulary& default_vocabulary() {
  static const Vocabulary vocab(default_entries());
  return vocab;
}

void TokenDistribution::validate() const {
  if (probs.empty()) throw InvalidArgument("empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("probabilities sum to " + std::to_string(sum));
}

bool operator==(const GumbelTrace& a, const GumbelTrace& b) {
  if (a.role != b.role || a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i)
    if (a.steps[i].noise != b.steps[i].noise) return false;
  return true;
}

PolicyContext PolicyContext::for_action(const PromptSlots& prompt) {
  PolicyContext c;
  c.kind = Kind::Action;
  c.prompt = prompt;
  return c;
}

PolicyContext PolicyContext::for_report(const PromptSlots& prompt, const ActionConfig& action,
                                        const KpiSummary& kpis) {
  PolicyContext c;
  c.kind = Kind::Report;
  c.prompt = prompt;
  c.action = action;
  c.kpis = kpis;
  return c;
}

std::string bucket_string(double value, double bucket) {
  if (!std::isfinite(value)) throw InvalidArgument("non-finite value cannot be bucketed");
  if (!(bucket > 0.0)) throw InvalidArgument("bucket width must be positive");
  const long long k = std::llround(std::max(0.0, value) / bucket);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", bucket_decimals(bucket), static_cast<double>(k) * bucket);
  return buf;
}

std::vector<TokenGroup> report_layout(const PolicyContext& ctx, const PolicyParams& params) {
  require_report_payload(ctx);
  std::vector<TokenGroup> layout{TokenGroup::Template, TokenGroup::ReportSched, TokenGroup::Syn1, TokenGroup::Syn2,
                                 TokenGroup::Syn3};
  const auto t = bucket_string(ctx.kpis->mean_throughput_mbps, params.throughput_bucket);
  const auto d = bucket_string(ctx.kpis->mean_delay_ms, params.delay_bucket);
  layout.insert(layout.end(), t.size() + d.size(), TokenGroup::Digit);
  layout.push_back(TokenGroup::Trend);
  layout.push_back(TokenGroup::Eos);
  return layout;
}

SlotPolicy::SlotPolicy(PolicyParams params, const Vocabulary& vocab) : params_(std::move(params)), vocab_(&vocab) {
  if (params_.eta < 0.0 || params_.eta >= 1.0) throw InvalidArgument("eta must lie in [0, 1)");
  if (params_.max_decode_length == 0) throw InvalidArgument("max decode length must be positive");
  const std::pair<const std::vector<double>*, TokenGroup> tables[] = {
      {&params_.sched_prior, TokenGroup::Sched},       {&params_.ues_prior, TokenGroup::Ues},
      {&params_.load_prior, TokenGroup::Load},         {&params_.dur_prior, TokenGroup::Dur},
      {&params_.template_probs, TokenGroup::Template}, {&params_.syn1_probs, TokenGroup::Syn1},
      {&params_.syn2_probs, TokenGroup::Syn2},         {&params_.syn3_probs, TokenGroup::Syn3}};
  for (const auto& [table, group] : tables) {
    if (table->size() != vocab_->members(group).size())
      throw InvalidArgument("table size does not match token group " + ccg::to_string(group));
    TokenDistribution{*table}.validate();
  }
}

// Probabilities over the members of the slot group at `position`, in member order.
std::vector<double> SlotPolicy::slot_values(const PolicyContext& ctx, std::size_t position) const {
  const auto& p = params_;
  if (ctx.kind == PolicyContext::Kind::Action) {
    const auto& x = ctx.prompt;
    switch (position) {
      case 0:
        return x.scheduler ? smoothed(2, *x.scheduler == Scheduler::PF ? 1 : 0, p.eta) : p.sched_prior;
      case 1:
        return x.num_ues ? smoothed(8, slot_index(*x.num_ues, kMinUes, kMaxUes, "UE count"), p.eta) : p.ues_prior;
      case 2:
        return x.load_mbps ? smoothed(9, slot_index(*x.load_mbps, 2, 10, "load"), p.eta) : p.load_prior;
      case 3:
        return x.duration_s ? smoothed(6, slot_index(*x.duration_s, 5, 10, "duration"), p.eta) : p.dur_prior;
      default:
        return {1.0};
    }
  }

  switch (position) {
    case 0: return p.template_probs;
    case 1: return one_hot(2, ctx.action->scheduler == Scheduler::PF ? 1 : 0);
    case 2: return p.syn1_probs;
    case 3: return p.syn2_probs;
    case 4: return p.syn3_probs;
    default: break;
  }
  const auto digits = bucket_string(ctx.kpis->mean_throughput_mbps, p.throughput_bucket) +
                      bucket_string(ctx.kpis->mean_delay_ms, p.delay_bucket);
  const std::size_t k = position - 5;
  if (k < digits.size()) {
    const char c = digits[k];
    return one_hot(11, c == '.' ? 10 : static_cast<std::size_t>(c - '0'));
  }
  if (k == digits.size()) return one_hot(3, trend_offset(ctx, p));
  return {1.0};
}

TokenDistribution SlotPolicy::next_distribution(const PolicyContext& ctx, const TokenSequence& prefix) const {
  return next_distribution(ctx, prefix.size(), prefix);
}

TokenDistribution SlotPolicy::next_distribution(const PolicyContext& ctx, std::size_t position,
                                                const TokenSequence& prefix) const {
  if (position != prefix.size()) throw InvalidState("position is not the next unfilled slot");
  const auto layout = ctx.kind == PolicyContext::Kind::Action ? kActionLayout : report_layout(ctx, params_);
  if (position >= layout.size()) throw InvalidState("prefix already complete");
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (prefix.indices[i] >= vocab_->size() || vocab_->group(prefix.indices[i]) != layout[i])
      throw InvalidState("prefix token " + std::to_string(i) + " does not follow the slot grammar");
  }

  const auto values = slot_values(ctx, position);
  const auto& members = vocab_->members(layout[position]);
  if (values.size() != members.size()) throw InvalidState("slot table does not match vocabulary group");
  TokenDistribution dist{std::vector<double>(vocab_->size(), 0.0)};
  for (std::size_t j = 0; j < members.size(); ++j) dist.probs[members[j]] = values[j];
  return dist;
}

nlohmann::json SlotPolicy::to_json() const {
  nlohmann::json vocab = nlohmann::json::array();
  for (const auto& e : vocab_->entries()) vocab.push_back({{"token", e.text}, {"group", ccg::to_string(e.group)}});
  const auto& p = params_;
  return {{"version", kPolicyJsonVersion},
          {"vocabulary", vocab},
          {"params",
           {{"eta", p.eta},
            {"sched_prior", p.sched_prior},
            {"ues_prior", p.ues_prior},
            {"load_prior", p.load_prior},
            {"dur_prior", p.dur_prior},
            {"template_probs", p.template_probs},
            {"syn1_probs", p.syn1_probs},
            {"syn2_probs", p.syn2_probs},
            {"syn3_probs", p.syn3_probs},
            {"throughput_bucket", p.throughput_bucket},
            {"delay_bucket", p.delay_bucket},
            {"trend_deadband", p.trend_deadband},
            {"max_decode_length", p.max_decode_length}}}};
}

SlotPolicy SlotPolicy::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kPolicyJsonVersion) throw ParseError("unsupported policy version", j.dump());
  const auto& vocab = default_vocabulary();
  const auto& tokens = j.at("vocabulary");
  if (tokens.size() != vocab.size()) throw ParseError("vocabulary size mismatch", std::to_string(tokens.size()));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].at("token").get<std::string>() != vocab.text(i))
      throw ParseError("vocabulary mismatch at index " + std::to_string(i), tokens[i].dump());
  }
  const auto& q = j.at("params");
  PolicyParams p;
  q.at("eta").get_to(p.eta);
  q.at("sched_prior").get_to(p.sched_prior);
  q.at("ues_prior").get_to(p.ues_prior);
  q.at("load_prior").get_to(p.load_prior);
  q.at("dur_prior").get_to(p.dur_prior);
  q.at("template_probs").get_to(p.template_probs);
  q.at("syn1_probs").get_to(p.syn1_probs);
  q.at("syn2_probs").get_to(p.syn2_probs);
  q.at("syn3_probs").get_to(p.syn3_probs);
  q.at("throughput_bucket").get_to(p.throughput_bucket);
  q.at("delay_bucket").get_to(p.delay_bucket);
  q.at("trend_deadband").get_to(p.trend_deadband);
  q.at("max_decode_length").get_to(p.max_decode_length);
  return SlotPolicy(std::move(p), vocab);
}

GumbelNoiseVector sample_gumbel_vector(Rng& rng, std::size_t vocab_size) {
  if (vocab_size == 0) throw InvalidArgument("vocabulary size must be positive");
  GumbelNoiseVector g;
  g.noise.resize(vocab_size);
  for (auto& x : g.noise) x = -std::log(-std::log(uniform_open01(rng)));
  return g;
}

std::size_t gumbel_max_select(const TokenDistribution& dist, const GumbelNoiseVector& noise) {
  if (dist.probs.size() != noise.noise.size()) throw InvalidArgument("distribution and noise lengths differ");
  std::size_t best = dist.probs.size();
  double best_score = kNegInf;
  for (std::size_t v = 0; v < dist.probs.size(); ++v) {
    if (!(dist.probs[v] > 0.0)) continue;
    const double score = std::log(dist.probs[v]) + noise.noise[v];
    if (best == dist.probs.size() || score > best_score) {
      best = v;
      best_score = score;
    }
  }
  if (best == dist.probs.size()) throw InvalidArgument("all-zero distribution");
  return best;
}

DecodeResult decode_with_trace(const SlotPolicy& policy, const PolicyContext& ctx, const GumbelTrace* trace,
                               Rng& rng) {
  const std::size_t V = policy.vocabulary().size();
  if (trace) {
    for (const auto& step : trace->steps)
      if (step.noise.size() != V) throw InvalidArgument("trace vector length differs from vocabulary size");
  }
  DecodeResult out;
  out.trace.role = ctx.kind == PolicyContext::Kind::Action ? TraceRole::Action : TraceRole::Report;
  const std::size_t eos = policy.vocabulary().eos();
  while (out.sequence.size() < policy.params().max_decode_length) {
    const std::size_t i = out.sequence.size();
    const auto dist = policy.next_distribution(ctx, out.sequence);
    out.trace.steps.push_back(trace && i < trace->size() ? trace->steps[i] : sample_gumbel_vector(rng, V));
    const std::size_t tok = gumbel_max_select(dist, out.trace.steps.back());
    out.sequence.indices.push_back(tok);
    if (tok == eos) {
      out.sequence.terminated = true;
      return out;
    }
  }
  throw TruncatedOutput("maximum decode length reached without EOS", out.sequence.indices);
}

double sequence_loglik(const SlotPolicy& policy, const PolicyContext& ctx, const TokenSequence& seq) {
  if (seq.indices.empty()) throw InvalidArgument("empty sequence");
  double total = 0.0;
  TokenSequence prefix;
  for (std::size_t tok : seq.indices) {
    TokenDistribution dist;
    try {
      dist = policy.next_distribution(ctx, prefix);
    } catch (const InvalidState&) {
      return kNegInf;
    }
    if (tok >= dist.probs.size() || !(dist.probs[tok] > 0.0)) return kNegInf;
    total += std::log(dist.probs[tok]);
    prefix.indices.push_back(tok);
  }
  return total / static_cast<double>(seq.size());
}

ActionConfig action_from_tokens(const TokenSequence& seq, const Vocabulary& vocab) {
  if (seq.size() < kActionLayout.size()) throw ParseError("incomplete action", render_tokens(seq, vocab));
  ActionConfig a;
  for (std::size_t i = 0; i < kActionLayout.size(); ++i) {
    if (vocab.group(seq.indices[i]) != kActionLayout[i])
      throw ParseError("action token out of grammar", vocab.text(seq.indices[i]));
  }
  const auto value = [&](std::size_t i) {
    const auto& t = vocab.text(seq.indices[i]);
    return t.substr(t.find(':') + 1);
  };
  a.scheduler = scheduler_from_string(value(0));
  a.num_ues = std::stoi(value(1));
  a.load_mbps = std::stod(value(2));
  a.duration_s = std::stod(value(3));
  return a;
}

std::string render_tokens(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string s;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) s += ' ';
    s += vocab.text(seq.indices[i]);
  }
  return s;
}

std::string render_report_text(const TokenSequence& seq, const Vocabulary& vocab) {
  const std::string tpl = group_text(seq, vocab, TokenGroup::Template);
  const std::string rs = group_text(seq, vocab, TokenGroup::ReportSched);
  const std::string sched = rs.empty() ? "?" : rs.substr(3);
  const std::string s1 = group_text(seq, vocab, TokenGroup::Syn1);
  const std::string s2 = group_text(seq, vocab, TokenGroup::Syn2);
  const std::string s3 = group_text(seq, vocab, TokenGroup::Syn3);
  const std::string trend = group_text(seq, vocab, TokenGroup::Trend);

  // Digits are throughput then delay; each number has exactly one '.'.
  std::string digits;
  for (std::size_t idx : seq.indices)
    if (vocab.group(idx) == TokenGroup::Digit) digits += vocab.text(idx);
  std::string tput = digits, delay;
  if (auto dot = digits.find('.'); dot != std::string::npos && dot + 2 <= digits.size()) {
    tput = digits.substr(0, dot + 2);
    delay = digits.substr(dot + 2);
  }

  std::ostringstream os;
  if (tpl == "tpl:1") {
    os << sched << " run: mean " << s2 << " " << s1 << " was " << tput << " Mbps per UE, mean " << s3 << " " << delay
       << " ms, " << trend << " over the run.";
  } else if (tpl == "tpl:2") {
    os << "Per-UE " << s2 << " " << s1 << " under " << sched << ": " << tput << " Mbps. Mean " << s3 << ": " << delay
       << " ms. Trend: " << trend << ".";
  } else if (tpl == "tpl:3") {
    os << "Summary (" << sched << "): " << tput << " Mbps " << s1 << " " << s2 << ", " << delay << " ms " << s3 << ", "
       << trend << ".";
  } else {
    os << "With " << sched << " scheduling the cell " << s1 << " a mean " << s2 << " of " << tput
       << " Mbps per UE and a mean " << s3 << " of " << delay << " ms; " << s2 << " is " << trend << ".";
  }
  return os.str();
}

void to_json(nlohmann::json& j, const TokenSequence& s) {
  j = {{"indices", s.indices}, {"terminated", s.terminated}};
}

void from_json(const nlohmann::json& j, TokenSequence& s) {
  j.at("indices").get_to(s.indices);
  j.at("terminated").get_to(s.terminated);
}

void to_json(nlohmann::json& j, const GumbelTrace& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& v : t.steps) steps.push_back(v.noise);
  j = {{"role", t.role == TraceRole::Action ? "action" : "report"}, {"steps", steps}};
}

void from_json(const nlohmann::json& j, GumbelTrace& t) {
  const auto role = j.at("role").get<std::string>();
  if (role != "action" && role != "report") throw ParseError("unknown trace role", role);
  t.role = role == "action" ? TraceRole::Action : TraceRole::Report;
  t.steps.clear();
  for (const auto& v : j.at("steps")) t.steps.push_back({v.get<std::vector<double>>()});
}

void to_json(nlohmann::json& j, const PromptSlots& s) {
  j = nlohmann::json::object();
  if (s.scheduler) j["scheduler"] = to_string(*s.scheduler);
  if (s.num_ues) j["num_ues"] = *s.num_ues;
  if (s.load_mbps) j["load_mbps"] = *s.load_mbps;
  if (s.duration_s) j["duration_s"] = *s.duration_s;
}

void from_json(const nlohmann::json& j, PromptSlots& s) {
  s = {};
  if (j.contains("scheduler")) s.scheduler = scheduler_from_string(j.at("scheduler").get<std::string>());
  if (j.contains("num_ues")) s.num_ues = j.at("num_ues").get<int>();
  if (j.contains("load_mbps")) s.load_mbps = j.at("load_mbps").get<int>();
  if (j.contains("duration_s")) s.duration_s = j.at("duration_s").get<int>();
}

}  // namespace ccg
