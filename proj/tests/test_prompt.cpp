#include <gtest/gtest.h>

#include "ccg/errors.hpp"
#include "ccg/prompt.hpp"

using namespace ccg;

TEST(Prompt, ParsesHandWrittenText) {
  const auto s = parse_prompt("Run an experiment using the proportional fair scheduler, with eight users, "
                              "at 5 Mbps per user, and for 10 seconds.");
  EXPECT_EQ(s, (PromptSlots{Scheduler::PF, 8, 5, 10}));
  EXPECT_EQ(parse_prompt("Launch a scenario with RR scheduling and lasting 6 s."),
            (PromptSlots{Scheduler::RR, std::nullopt, std::nullopt, 6}));
}

TEST(Prompt, RenderMentionsEverySlot) {
  const auto p = render_prompt({Scheduler::PF, 8, 5, 10}, 3);
  EXPECT_NE(p.text.find("5"), std::string::npos);
  EXPECT_NE(p.text.find("10"), std::string::npos);
  EXPECT_TRUE(p.text.find("eight") != std::string::npos || p.text.find("8") != std::string::npos);
  EXPECT_TRUE(p.text.find("PF") != std::string::npos || p.text.find("proportional") != std::string::npos);
}

TEST(Prompt, RenderParseRoundTripAcrossStyles) {
  const PromptSlots slots{Scheduler::RR, 4, 3, 7};
  for (std::uint64_t style = 0; style < 200; ++style) {
    const auto p = render_prompt(slots, style);
    EXPECT_EQ(parse_prompt(p.text), slots) << p.text;
  }
  const PromptSlots partial{std::nullopt, 10, std::nullopt, 5};
  for (std::uint64_t style = 0; style < 50; ++style) EXPECT_EQ(parse_prompt(render_prompt(partial, style).text), partial);
}

TEST(Prompt, OutOfRangeValueNamesFragment) {
  try {
    parse_prompt("Run an experiment with 50 users.");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.fragment(), "with 50 users");
  }
}

TEST(Prompt, UnknownTextIsRejected) {
  EXPECT_THROW(parse_prompt("Run an experiment with 5 users on Mars."), ParseError);
  EXPECT_THROW(parse_prompt("Order a pizza."), ParseError);
  EXPECT_THROW(parse_prompt("Run an experiment with 5 users and for 3 UEs."), ParseError);
}

TEST(Prompt, RenderRejectsOutOfRangeSlots) {
  EXPECT_THROW(render_prompt({std::nullopt, 2, std::nullopt, std::nullopt}, 0), InvalidArgument);
  EXPECT_THROW(render_prompt({std::nullopt, std::nullopt, std::nullopt, 11}, 0), InvalidArgument);
}

TEST(Edit, ChangesOnlyRequestedSlots) {
  const auto x = render_prompt({Scheduler::PF, 6, 4, 8}, 11);
  EditSpec e;
  e.changes.load_mbps = 9;
  const auto y = edit_prompt(x, e);
  EXPECT_EQ(y.slots, (PromptSlots{Scheduler::PF, 6, 9, 8}));
  EXPECT_EQ(y.style_seed, x.style_seed);
  EXPECT_TRUE(in_edit_set(x, y));
}

TEST(Edit, RejectsInvalidEdits) {
  const auto x = render_prompt({Scheduler::PF, 6, 4, 8}, 11);
  EditSpec too_many;
  too_many.changes = {Scheduler::RR, 7, 5, std::nullopt};
  EXPECT_THROW(edit_prompt(x, too_many), InvalidArgument);
  EditSpec out_of_range;
  out_of_range.changes.load_mbps = 11;
  EXPECT_THROW(edit_prompt(x, out_of_range), InvalidArgument);
  EXPECT_THROW(edit_prompt(x, EditSpec{}), InvalidArgument);
}

TEST(Edit, RephrasingIsAdmissible) {
  const auto x = render_prompt({Scheduler::RR, 5, 5, 5}, 1);
  EditSpec e;
  e.style_seed = 2;
  const auto y = edit_prompt(x, e);
  EXPECT_EQ(y.slots, x.slots);
  EXPECT_EQ(in_edit_set(x, y), x.text != y.text);
  EXPECT_FALSE(in_edit_set(x, x));
}

TEST(Edit, ThreeChangesLeaveTheEditSet) {
  const auto x = render_prompt({Scheduler::RR, 5, 5, 5}, 1);
  EXPECT_FALSE(in_edit_set(x, render_prompt({Scheduler::PF, 6, 6, 5}, 1)));
  EXPECT_TRUE(in_edit_set(x, render_prompt({Scheduler::PF, 6, 5, 5}, 1)));
}

TEST(Prompt, JsonRoundTrip) {
  const auto p = render_prompt({Scheduler::PF, 3, 2, 5}, 9);
  EXPECT_EQ(nlohmann::json(p).get<PromptSpec>(), p);
}
