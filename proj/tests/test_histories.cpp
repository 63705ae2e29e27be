#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "doctest.h"
#include "recap/histories.hpp"

using namespace recap;

namespace {

History h(const std::string& digits) {
  auto parsed = History::parse(digits);
  REQUIRE(parsed.has_value());
  return *parsed;
}

std::vector<std::string> observed_strings(const HistoryUniverse& u) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < u.observed_size(); ++i) out.push_back(u.observed_history(i).str());
  return out;
}

std::vector<std::string> latent_strings(const HistoryUniverse& u) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < u.latent_size(); ++j) out.push_back(u.latent_history(j).str());
  return out;
}

}  // namespace

TEST_CASE("study shape validation") {
  CHECK_THROWS_AS(StudyShape{1}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(StudyShape{0}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(StudyShape{17}.validate(), std::invalid_argument);
  CHECK_NOTHROW(StudyShape{2}.validate());
  CHECK_NOTHROW(StudyShape{16}.validate());
}

TEST_CASE("history parsing and formatting") {
  CHECK(h("1030").str() == "1030");
  CHECK(h("1030").length() == 4);
  CHECK(h("1030").event(1) == kEventSeen);
  CHECK(h("1030").event(2) == kEventNone);
  CHECK(h("1030").event(3) == kEventFalsePos);
  CHECK_FALSE(History::parse("10a0").has_value());
  CHECK_FALSE(History::parse("").has_value());
  CHECK_FALSE(History::parse("104").has_value());
}

TEST_CASE("marking occasion and binary check") {
  CHECK(h("0010").marking_occasion() == 3);
  CHECK(h("1000").marking_occasion() == 1);
  CHECK(h("0000").marking_occasion() == 0);
  CHECK(h("0230").marking_occasion() == 2);
  CHECK(h("1010").is_binary());
  CHECK_FALSE(h("1020").is_binary());
}

TEST_CASE("history codes are numeral values, occasion 1 most significant") {
  CHECK(h("10").code(2) == 2);
  CHECK(h("11").code(2) == 3);
  CHECK(h("111").code(2) == 7);
  CHECK(h("13").code(4) == 7);
  CHECK(h("123").code(4) == 27);
}

TEST_CASE("validity rule: marking is a 1 strictly before the last occasion") {
  CHECK(is_valid_history(h("10")));
  CHECK(is_valid_history(h("010")));
  CHECK_FALSE(is_valid_history(h("01")));    // marked at the final occasion
  CHECK_FALSE(is_valid_history(h("001")));
  CHECK_FALSE(is_valid_history(h("00")));    // never marked
  CHECK_FALSE(is_valid_latent(h("20")));     // first nonzero not a 1
  CHECK_FALSE(is_valid_latent(h("030")));
  CHECK(is_valid_latent(h("120")));
  CHECK(is_valid_latent(h("013")));
}

TEST_CASE("collapse maps") {
  // Observed: events {1,3} register as sightings. Capture: {1,2} are real.
  CHECK(observed_of(h("1230")).str() == "1010");
  CHECK(capture_of(h("1230")).str() == "1100");
  CHECK(observed_of(h("1111")).str() == "1111");
  CHECK(capture_of(h("1111")).str() == "1111");
  CHECK(observed_of(h("0100")).str() == "0100");
}

TEST_CASE("universe sizes match the closed forms for T = 2..6") {
  for (int T = 2; T <= 6; ++T) {
    HistoryUniverse u(StudyShape{T});
    const auto I = static_cast<std::size_t>((1ull << T) - 2);
    std::size_t J = 0;
    std::uint64_t pow4 = 1;
    for (int t = 0; t < T; ++t) pow4 *= 4;
    J = static_cast<std::size_t>((pow4 - 1) / 3 - 1);
    CHECK(u.observed_size() == I);
    CHECK(u.capture_size() == I);
    CHECK(u.latent_size() == J);
  }
}

TEST_CASE("canonical enumeration order for T = 2") {
  HistoryUniverse u(StudyShape{2});
  CHECK(observed_strings(u) == std::vector<std::string>{"10", "11"});
  CHECK(latent_strings(u) == std::vector<std::string>{"10", "11", "12", "13"});
}

TEST_CASE("canonical enumeration order for T = 3") {
  HistoryUniverse u(StudyShape{3});
  CHECK(observed_strings(u) ==
        std::vector<std::string>{"010", "011", "100", "101", "110", "111"});
  const auto latent = latent_strings(u);
  REQUIRE(latent.size() == 20);
  CHECK(latent[0] == "010");
  CHECK(latent[3] == "013");
  CHECK(latent[4] == "100");
  CHECK(latent[19] == "133");
  // Ascending base-4 numeral order throughout.
  for (std::size_t j = 0; j + 1 < latent.size(); ++j) {
    CHECK(h(latent[j]).code(4) < h(latent[j + 1]).code(4));
  }
}

TEST_CASE("every enumerated history is valid and unique") {
  HistoryUniverse u(StudyShape{4});
  std::vector<std::uint64_t> codes;
  for (std::size_t j = 0; j < u.latent_size(); ++j) {
    const History hist = u.latent_history(j);
    CHECK(is_valid_latent(hist));
    codes.push_back(hist.code(4));
  }
  CHECK(std::is_sorted(codes.begin(), codes.end()));
  CHECK(std::adjacent_find(codes.begin(), codes.end()) == codes.end());
  for (std::size_t i = 0; i < u.observed_size(); ++i) {
    CHECK(is_valid_history(u.observed_history(i)));
    CHECK(u.observed_history(i).is_binary());
  }
}

TEST_CASE("index lookup inverts enumeration") {
  HistoryUniverse u(StudyShape{4});
  for (std::size_t j = 0; j < u.latent_size(); ++j) {
    CHECK(u.latent_index(u.latent_history(j)) == j);
  }
  for (std::size_t i = 0; i < u.observed_size(); ++i) {
    CHECK(u.observed_index(u.observed_history(i)) == i);
    CHECK(u.capture_index(u.capture_history(i)) == i);
  }
  CHECK_FALSE(u.find_latent_index(h("0001")).has_value());
  CHECK_FALSE(u.find_observed_index(h("0000")).has_value());
  CHECK_THROWS_AS(u.latent_index(h("0001")), std::invalid_argument);
}

TEST_CASE("flat event and marking accessors agree with history objects") {
  HistoryUniverse u(StudyShape{4});
  for (std::size_t j = 0; j < u.latent_size(); ++j) {
    const History hist = u.latent_history(j);
    CHECK(u.latent_marking(j) == hist.marking_occasion());
    for (int t = 1; t <= 4; ++t) CHECK(u.latent_event(j, t) == hist.event(t));
  }
  for (std::size_t k = 0; k < u.capture_size(); ++k) {
    const History hist = u.capture_history(k);
    CHECK(u.binary_marking(k) == hist.marking_occasion());
    for (int t = 1; t <= 4; ++t) CHECK(u.binary_event(k, t) == hist.event(t));
  }
}
