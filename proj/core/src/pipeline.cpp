#include "ccg/pipeline.hpp"

#include <array>
#include <cstdio>
#include <istream>
#include <ostream>

#include "ccg/errors.hpp"

namespace ccg {
namespace {

CounterfactualOutcome finish(const PipelineConfig& cfg, const PromptSpec& x, DecodeResult action, KpiSeries kpis,
                             const GumbelTrace* report_trace, Rng& rng) {
  CounterfactualOutcome out;
  out.action_tokens = std::move(action.sequence);
  out.action = action_from_tokens(out.action_tokens);
  out.kpis = std::move(kpis);
  const auto ctx = PolicyContext::for_report(x.slots, out.action, summarize_kpis(out.kpis));
  out.report = decode_with_trace(cfg.policy, ctx, report_trace, rng).sequence;
  out.report_text = render_report_text(out.report);
  return out;
}

CounterfactualOutcome fresh_run(const PipelineConfig& cfg, const PromptSpec& x, Rng& rng, Fidelity fidelity) {
  auto action = decode_with_trace(cfg.policy, PolicyContext::for_action(x.slots), nullptr, rng);
  const ActionConfig a = action_from_tokens(action.sequence);
  const ExogenousNoise noise = sample_exogenous_prior(rng);
  return finish(cfg, x, std::move(action), run_environment(a, noise, fidelity), nullptr, rng);
}

std::string record_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ep-%05zu", i);
  return buf;
}

}  // namespace

HiddenNoiseRecord::HiddenNoiseRecord(std::string episode_id, ExogenousNoise noise,
                                     std::uint64_t report_extension_seed)
    : episode_id_(std::move(episode_id)), noise_(std::move(noise)), report_extension_seed_(report_extension_seed) {}

const ExogenousNoise& HiddenNoiseRecord::noise() const {
  if (tripwire_) throw InvalidState("hidden noise of " + episode_id_ + " read by an estimator");
  ++reads_;
  return noise_;
}

std::pair<Episode, HiddenNoiseRecord> run_factual_episode(const PipelineConfig& cfg, const PromptSpec& x,
                                                          std::uint64_t seed, const std::string& id) {
  Rng action_rng = make_rng(seed, {tag(Stream::kAction)});
  Rng env_rng = make_rng(seed, {tag(Stream::kEnvironment)});
  Rng report_rng = make_rng(seed, {tag(Stream::kReport)});

  Episode e;
  e.id = id;
  e.prompt = x;
  auto action = decode_with_trace(cfg.policy, PolicyContext::for_action(x.slots), nullptr, action_rng);
  e.action_tokens = action.sequence;
  e.action_trace = std::move(action.trace);
  e.action = action_from_tokens(e.action_tokens);

  ExogenousNoise noise = sample_exogenous_prior(env_rng);
  e.kpis = run_environment(e.action, noise, cfg.real);

  const auto ctx = PolicyContext::for_report(x.slots, e.action, summarize_kpis(e.kpis));
  auto report = decode_with_trace(cfg.policy, ctx, nullptr, report_rng);
  e.report = report.sequence;
  e.report_trace = std::move(report.trace);
  e.report_text = render_report_text(e.report);

  return {std::move(e), HiddenNoiseRecord(id, std::move(noise), derive_seed(seed, {tag(Stream::kReportExtension)}))};
}

CounterfactualOutcome run_cg(const PipelineConfig& cfg, const Episode& t, const PromptSpec& x_prime,
                             const Abductor& abductor, Rng& rng) {
  const ExogenousNoise u_hat = abductor.abduct(t.action, t.kpis, rng);
  auto action = decode_with_trace(cfg.policy, PolicyContext::for_action(x_prime.slots), &t.action_trace, rng);
  const ActionConfig a = action_from_tokens(action.sequence);
  return finish(cfg, x_prime, std::move(action), run_environment(a, u_hat, cfg.twin), &t.report_trace, rng);
}

CounterfactualOutcome run_ig(const PipelineConfig& cfg, const PromptSpec& x_prime, Rng& rng) {
  return fresh_run(cfg, x_prime, rng, cfg.real);
}

CounterfactualOutcome run_sig(const PipelineConfig& cfg, const PromptSpec& x_prime, Rng& rng) {
  return fresh_run(cfg, x_prime, rng, cfg.twin);
}

CounterfactualOutcome true_counterfactual(const PipelineConfig& cfg, const Episode& t,
                                          const HiddenNoiseRecord& hidden, const PromptSpec& x_prime) {
  Rng rng(hidden.report_extension_seed());
  auto action = decode_with_trace(cfg.policy, PolicyContext::for_action(x_prime.slots), &t.action_trace, rng);
  const ActionConfig a = action_from_tokens(action.sequence);
  return finish(cfg, x_prime, std::move(action), run_environment(a, hidden.noise(), cfg.real), &t.report_trace, rng);
}

PromptSlots sample_prompt_slots(Rng& rng) {
  PromptSlots s;
  const auto specified = [&rng] { return uniform_open01(rng) < kSlotSpecifiedProbability; };
  if (specified()) s.scheduler = rng() % 2 == 0 ? Scheduler::RR : Scheduler::PF;
  if (specified()) s.num_ues = kMinUes + static_cast<int>(rng() % (kMaxUes - kMinUes + 1));
  if (specified()) s.load_mbps = 2 + static_cast<int>(rng() % 9);
  if (specified()) s.duration_s = 5 + static_cast<int>(rng() % 6);
  return s;
}

EditSpec sample_edit(const PromptSpec& x, Rng& rng) {
  EditSpec edit;
  const double u = uniform_open01(rng);
  if (u >= 0.8) {
    std::uint64_t seed = rng();
    while (seed == x.style_seed || render_prompt(x.slots, seed).text == x.text) seed = rng();
    edit.style_seed = seed;
    return edit;
  }
  const int changes = u < 0.4 ? 1 : 2;
  std::array<int, 4> slots{0, 1, 2, 3};
  for (int i = 3; i > 0; --i) std::swap(slots[i], slots[rng() % static_cast<unsigned>(i + 1)]);
  const auto other = [&rng](int current, int lo, int hi) {
    int v = current;
    while (v == current) v = lo + static_cast<int>(rng() % static_cast<unsigned>(hi - lo + 1));
    return v;
  };
  for (int k = 0; k < changes; ++k) {
    switch (slots[k]) {
      case 0:
        edit.changes.scheduler = x.slots.scheduler == Scheduler::PF ? Scheduler::RR
                                 : x.slots.scheduler == Scheduler::RR ? Scheduler::PF
                                 : (rng() % 2 == 0 ? Scheduler::RR : Scheduler::PF);
        break;
      case 1: edit.changes.num_ues = other(x.slots.num_ues.value_or(0), kMinUes, kMaxUes); break;
      case 2: edit.changes.load_mbps = other(x.slots.load_mbps.value_or(0), 2, 10); break;
      case 3: edit.changes.duration_s = other(x.slots.duration_s.value_or(0), 5, 10); break;
    }
  }
  return edit;
}

Dataset generate_dataset(const PipelineConfig& cfg, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("dataset size must be positive");
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    Rng prompt_rng = make_rng(seed, {tag(Stream::kPrompt), i});
    Rng edit_rng = make_rng(seed, {tag(Stream::kEdit), i});
    const PromptSpec x = render_prompt(sample_prompt_slots(prompt_rng), prompt_rng());
    const PromptSpec x_prime = edit_prompt(x, sample_edit(x, edit_rng));

    DatasetRecord r;
    r.id = record_id(i);
    r.x = x;
    r.x_prime = x_prime;
    auto [episode, hidden] = run_factual_episode(cfg, x, derive_seed(seed, {tag(Stream::kEnvironment), i}), r.id);
    r.episode = std::move(episode);
    r.truth = true_counterfactual(cfg, r.episode, hidden, x_prime);
    ds.records.push_back(std::move(r));
    ds.hidden.push_back(std::move(hidden));
  }
  return ds;
}

void write_dataset(std::ostream& records, std::ostream& hidden, const Dataset& ds) {
  for (const auto& r : ds.records) records << nlohmann::json(r).dump() << '\n';
  for (const auto& h : ds.hidden) hidden << nlohmann::json(h).dump() << '\n';
}

Dataset read_dataset(std::istream& records, std::istream& hidden) {
  Dataset ds;
  std::string line;
  while (std::getline(records, line))
    if (!line.empty()) ds.records.push_back(nlohmann::json::parse(line).get<DatasetRecord>());
  while (std::getline(hidden, line))
    if (!line.empty()) ds.hidden.push_back(nlohmann::json::parse(line).get<HiddenNoiseRecord>());
  if (ds.records.size() != ds.hidden.size())
    throw ParseError("record and hidden-noise counts differ", std::to_string(ds.hidden.size()));
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    if (ds.records[i].id != ds.hidden[i].episode_id())
      throw ParseError("hidden-noise record out of order", ds.hidden[i].episode_id());
  }
  return ds;
}

void to_json(nlohmann::json& j, const HiddenNoiseRecord& h) {
  j = {{"episode_id", h.episode_id_}, {"noise", h.noise_}, {"report_extension_seed", h.report_extension_seed_}};
}

void from_json(const nlohmann::json& j, HiddenNoiseRecord& h) {
  h = HiddenNoiseRecord(j.at("episode_id").get<std::string>(), j.at("noise").get<ExogenousNoise>(),
                        j.at("report_extension_seed").get<std::uint64_t>());
}

void to_json(nlohmann::json& j, const Episode& e) {
  j = {{"id", e.id},
       {"prompt", e.prompt},
       {"action", e.action},
       {"action_tokens", e.action_tokens},
       {"kpis", e.kpis},
       {"report", e.report},
       {"report_text", e.report_text},
       {"action_trace", e.action_trace},
       {"report_trace", e.report_trace}};
}

void from_json(const nlohmann::json& j, Episode& e) {
  j.at("id").get_to(e.id);
  j.at("prompt").get_to(e.prompt);
  j.at("action").get_to(e.action);
  j.at("action_tokens").get_to(e.action_tokens);
  j.at("kpis").get_to(e.kpis);
  j.at("report").get_to(e.report);
  j.at("report_text").get_to(e.report_text);
  j.at("action_trace").get_to(e.action_trace);
  j.at("report_trace").get_to(e.report_trace);
}

void to_json(nlohmann::json& j, const CounterfactualOutcome& c) {
  j = {{"action", c.action},
       {"action_tokens", c.action_tokens},
       {"kpis", c.kpis},
       {"report", c.report},
       {"report_text", c.report_text}};
}

void from_json(const nlohmann::json& j, CounterfactualOutcome& c) {
  j.at("action").get_to(c.action);
  j.at("action_tokens").get_to(c.action_tokens);
  j.at("kpis").get_to(c.kpis);
  j.at("report").get_to(c.report);
  j.at("report_text").get_to(c.report_text);
}

void to_json(nlohmann::json& j, const DatasetRecord& r) {
  j = {{"id", r.id}, {"x", r.x}, {"x_prime", r.x_prime}, {"episode", r.episode}, {"truth", r.truth}};
}

void from_json(const nlohmann::json& j, DatasetRecord& r) {
  j.at("id").get_to(r.id);
  j.at("x").get_to(r.x);
  j.at("x_prime").get_to(r.x_prime);
  j.at("episode").get_to(r.episode);
  j.at("truth").get_to(r.truth);
}

}  // namespace ccg
