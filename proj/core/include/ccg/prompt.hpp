#pragma once
// Operator prompts: templated rendering, grammar-bounded parsing and edits.

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ccg/policy.hpp"

namespace ccg {

struct PromptSpec {
  std::string text;
  PromptSlots slots;
  std::uint64_t style_seed = 0;

  friend bool operator==(const PromptSpec&, const PromptSpec&) = default;
};

// Set fields are the slots to change; at most two, all in range.
struct EditSpec {
  PromptSlots changes;
  std::optional<std::uint64_t> style_seed;
};

// Throws InvalidArgument when a set slot is outside its admissible range.
void validate_slots(const PromptSlots& slots);

int count_set_slots(const PromptSlots& slots);

// Number of slots whose value (including presence) differs.
int count_slot_differences(const PromptSlots& a, const PromptSlots& b);

PromptSpec render_prompt(const PromptSlots& slots, std::uint64_t style_seed);

// Throws ParseError naming the unmatched fragment for text outside the template
// grammar, and for in-grammar phrases carrying out-of-range values.
PromptSlots parse_prompt(const std::string& text);

PromptSpec edit_prompt(const PromptSpec& x, const EditSpec& edit);

// X' is an admissible counterfactual prompt for X: one or two slot changes, or
// identical slots with different wording.
bool in_edit_set(const PromptSpec& x, const PromptSpec& x_prime);

void to_json(nlohmann::json& j, const PromptSpec& p);
void from_json(const nlohmann::json& j, PromptSpec& p);

}  // namespace ccg
