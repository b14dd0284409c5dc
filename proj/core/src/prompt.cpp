#include "ccg/prompt.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>
#include <vector>

#include "ccg/errors.hpp"

namespace ccg {
namespace {

const std::array<const char*, 8> kOpeners{
    "Please configure the cell",   "Set up a run",           "I would like to test the cell",
    "Run an experiment",           "Configure the base station", "Launch a scenario",
    "Can you set up the network",  "Let us evaluate the cell",
};

const std::array<const char*, 21> kNumberWords{
    "zero",  "one",  "two",    "three",  "four",    "five",    "six",
    "seven", "eight", "nine",  "ten",    "eleven",  "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
};

const std::array<const char*, 3> kPfPhrases{"using the proportional fair scheduler", "with PF scheduling",
                                            "under proportional-fair scheduling"};
const std::array<const char*, 3> kRrPhrases{"using the round robin scheduler", "with RR scheduling",
                                            "under round-robin scheduling"};
const std::array<const char*, 3> kUePhrases{"with {} users", "for {} UEs", "serving {} user equipments"};
const std::array<const char*, 3> kLoadPhrases{"at {} Mbps per user", "with an offered load of {} Mbps",
                                              "each UE requesting {} Mbps"};
const std::array<const char*, 3> kDurationPhrases{"for {} seconds", "over a {}-second run", "lasting {} s"};

constexpr const char* kNum = R"((\d+|[a-z]+))";

struct SlotPattern {
  std::regex re;
  int slot;  // 0 scheduler, 1 ues, 2 load, 3 duration
  std::optional<Scheduler> scheduler;
};

std::string escape_regex(const std::string& s) {
  static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
  return std::regex_replace(s, special, R"(\$&)");
}

std::string fill(const char* phrase, const std::string& value) {
  std::string s(phrase);
  s.replace(s.find("{}"), 2, value);
  return s;
}

std::regex phrase_regex(const char* phrase) {
  std::string p(phrase);
  const auto pos = p.find("{}");
  if (pos == std::string::npos) return std::regex(escape_regex(p), std::regex::icase);
  return std::regex(escape_regex(p.substr(0, pos)) + kNum + escape_regex(p.substr(pos + 2)), std::regex::icase);
}

const std::vector<SlotPattern>& slot_patterns() {
  static const std::vector<SlotPattern> patterns = [] {
    std::vector<SlotPattern> v;
    for (const char* p : kPfPhrases) v.push_back({phrase_regex(p), 0, Scheduler::PF});
    for (const char* p : kRrPhrases) v.push_back({phrase_regex(p), 0, Scheduler::RR});
    for (const char* p : kUePhrases) v.push_back({phrase_regex(p), 1, std::nullopt});
    for (const char* p : kLoadPhrases) v.push_back({phrase_regex(p), 2, std::nullopt});
    for (const char* p : kDurationPhrases) v.push_back({phrase_regex(p), 3, std::nullopt});
    return v;
  }();
  return patterns;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::optional<int> number_value(const std::string& token) {
  if (std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
    if (token.size() > 6) return std::nullopt;
    return std::stoi(token);
  }
  const auto t = lower(token);
  for (std::size_t i = 0; i < kNumberWords.size(); ++i)
    if (t == kNumberWords[i]) return static_cast<int>(i);
  return std::nullopt;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n,.;?!");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\n,.;?!");
  return s.substr(b, e - b + 1);
}

int range_check(int value, int lo, int hi, const std::string& fragment) {
  if (value < lo || value > hi) throw ParseError("value out of range [" + std::to_string(lo) + ", " +
                                                     std::to_string(hi) + "]", fragment);
  return value;
}

}  // namespace

void validate_slots(const PromptSlots& s) {
  if (s.num_ues && (*s.num_ues < kMinUes || *s.num_ues > kMaxUes))
    throw InvalidArgument("UE count " + std::to_string(*s.num_ues) + " out of range");
  if (s.load_mbps && (*s.load_mbps < 2 || *s.load_mbps > 10))
    throw InvalidArgument("load " + std::to_string(*s.load_mbps) + " out of range");
  if (s.duration_s && (*s.duration_s < 5 || *s.duration_s > 10))
    throw InvalidArgument("duration " + std::to_string(*s.duration_s) + " out of range");
}

int count_set_slots(const PromptSlots& s) {
  return static_cast<int>(s.scheduler.has_value()) + static_cast<int>(s.num_ues.has_value()) +
         static_cast<int>(s.load_mbps.has_value()) + static_cast<int>(s.duration_s.has_value());
}

int count_slot_differences(const PromptSlots& a, const PromptSlots& b) {
  return static_cast<int>(a.scheduler != b.scheduler) + static_cast<int>(a.num_ues != b.num_ues) +
         static_cast<int>(a.load_mbps != b.load_mbps) + static_cast<int>(a.duration_s != b.duration_s);
}

PromptSpec render_prompt(const PromptSlots& slots, std::uint64_t style_seed) {
  validate_slots(slots);
  Rng rng = make_rng(style_seed, {tag(Stream::kPrompt)});
  const auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  const auto number = [&](int v) {
    return pick(2) == 0 ? std::string(kNumberWords.at(static_cast<std::size_t>(v))) : std::to_string(v);
  };

  // All choices are drawn whether or not their slot is set.
  const std::size_t opener = pick(kOpeners.size());
  const std::size_t sched_v = pick(3), ues_v = pick(3), load_v = pick(3), dur_v = pick(3);
  const std::string ues_n = slots.num_ues ? number(*slots.num_ues) : number(kMinUes);
  std::array<int, 4> order{0, 1, 2, 3};
  std::shuffle(order.begin(), order.end(), rng);
  const bool question = std::string(kOpeners[opener]).rfind("Can you", 0) == 0;

  std::vector<std::string> clauses;
  for (int slot : order) {
    switch (slot) {
      case 0:
        if (slots.scheduler)
          clauses.push_back(slots.scheduler == Scheduler::PF ? kPfPhrases[sched_v] : kRrPhrases[sched_v]);
        break;
      case 1:
        if (slots.num_ues) clauses.push_back(fill(kUePhrases[ues_v], ues_n));
        break;
      case 2:
        if (slots.load_mbps) clauses.push_back(fill(kLoadPhrases[load_v], std::to_string(*slots.load_mbps)));
        break;
      case 3:
        if (slots.duration_s) clauses.push_back(fill(kDurationPhrases[dur_v], std::to_string(*slots.duration_s)));
        break;
    }
  }

  std::string text = kOpeners[opener];
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i == 0)
      text += " ";
    else if (i + 1 == clauses.size())
      text += clauses.size() > 2 ? ", and " : " and ";
    else
      text += ", ";
    text += clauses[i];
  }
  text += question ? "?" : ".";
  return {text, slots, style_seed};
}

PromptSlots parse_prompt(const std::string& text) {
  std::string rest = text;
  PromptSlots slots;
  std::array<bool, 4> seen{};
  for (const auto& pat : slot_patterns()) {
    std::smatch m;
    if (!std::regex_search(rest, m, pat.re)) continue;
    const std::string fragment = m.str(0);
    if (seen[pat.slot]) throw ParseError("slot given twice", fragment);
    seen[pat.slot] = true;
    if (pat.slot == 0) {
      slots.scheduler = pat.scheduler;
    } else {
      const auto v = number_value(m.str(1));
      if (!v) throw ParseError("not a number", m.str(1));
      switch (pat.slot) {
        case 1: slots.num_ues = range_check(*v, kMinUes, kMaxUes, fragment); break;
        case 2: slots.load_mbps = range_check(*v, 2, 10, fragment); break;
        case 3: slots.duration_s = range_check(*v, 5, 10, fragment); break;
      }
    }
    rest = m.prefix().str() + " , " + m.suffix().str();
  }

  static const std::regex separators(R"((\s|,|\.|\?|!|\band\b)+)", std::regex::icase);
  std::string leftover = trim(std::regex_replace(rest, separators, " "));
  const auto lowered = lower(leftover);
  bool opener_found = false;
  for (const char* o : kOpeners) {
    if (lowered.rfind(lower(o), 0) == 0) {
      leftover = trim(leftover.substr(std::string(o).size()));
      opener_found = true;
      break;
    }
  }
  if (!opener_found) throw ParseError("unrecognised prompt opening", leftover);
  if (!leftover.empty()) throw ParseError("unmatched prompt text", leftover);
  return slots;
}

PromptSpec edit_prompt(const PromptSpec& x, const EditSpec& edit) {
  if (count_set_slots(edit.changes) > 2) throw InvalidArgument("an edit changes at most two slots");
  validate_slots(edit.changes);
  PromptSlots s = x.slots;
  if (edit.changes.scheduler) s.scheduler = edit.changes.scheduler;
  if (edit.changes.num_ues) s.num_ues = edit.changes.num_ues;
  if (edit.changes.load_mbps) s.load_mbps = edit.changes.load_mbps;
  if (edit.changes.duration_s) s.duration_s = edit.changes.duration_s;
  const std::uint64_t seed = edit.style_seed.value_or(x.style_seed);
  if (count_slot_differences(s, x.slots) == 0 && seed == x.style_seed)
    throw InvalidArgument("edit changes neither a slot value nor the phrasing");
  return render_prompt(s, seed);
}

bool in_edit_set(const PromptSpec& x, const PromptSpec& x_prime) {
  const int d = count_slot_differences(x.slots, x_prime.slots);
  if (d > 2) return false;
  try {
    validate_slots(x_prime.slots);
    if (!(parse_prompt(x_prime.text) == x_prime.slots)) return false;
  } catch (const std::exception&) {
    return false;
  }
  return d >= 1 || x.text != x_prime.text;
}

void to_json(nlohmann::json& j, const PromptSpec& p) {
  j = {{"text", p.text}, {"slots", p.slots}, {"style_seed", p.style_seed}};
}

void from_json(const nlohmann::json& j, PromptSpec& p) {
  j.at("text").get_to(p.text);
  j.at("slots").get_to(p.slots);
  j.at("style_seed").get_to(p.style_seed);
}

}  // namespace ccg
