#include <sstream>

#include <gtest/gtest.h>

#include "ccg/errors.hpp"
#include "ccg/kvconfig.hpp"

using namespace ccg;

namespace {

KvConfig parse(const std::string& text) {
  std::istringstream in(text);
  return KvConfig::parse(in);
}

}  // namespace

TEST(KvConfig, ParsesTypedValues) {
  const auto c = parse("# run\nversion = 1\nsplits = 50\nname = demo  \nepsilons = 0.2, 0.3,0.4\nfast = true\n");
  EXPECT_EQ(c.get_int("splits", 0), 50);
  EXPECT_EQ(c.get_string("name", ""), "demo");
  EXPECT_EQ(c.get_doubles("epsilons", {}), (std::vector<double>{0.2, 0.3, 0.4}));
  EXPECT_TRUE(c.get_bool("fast", false));
  EXPECT_DOUBLE_EQ(c.get_double("missing", 1.5), 1.5);
}

TEST(KvConfig, RejectsMalformedInput) {
  EXPECT_THROW(parse("splits = 5\n"), ParseError);
  EXPECT_THROW(parse("version = 2\n"), ParseError);
  EXPECT_THROW(parse("version = 1\nnot a pair\n"), ParseError);
  EXPECT_THROW(parse("version = 1\na = 1\na = 2\n"), ParseError);
}

TEST(KvConfig, BadValuesThrow) {
  const auto c = parse("version = 1\nsplits = many\nlist = 1, x\n");
  EXPECT_THROW(c.get_int("splits", 0), ParseError);
  EXPECT_THROW(c.get_doubles("list", {}), ParseError);
}

TEST(KvConfig, UnknownKeysAreNamed) {
  const auto c = parse("version = 1\nsplits = 3\nsplitz = 4\n");
  try {
    c.require_known({"version", "splits"});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.fragment(), "splitz");
  }
}

TEST(KvConfig, DumpRoundTrips) {
  auto c = parse("version = 1\nk_values = 1, 2, 3\n");
  c.set("seed", "9");
  const auto back = parse(c.dump());
  EXPECT_EQ(back.values(), c.values());
}
