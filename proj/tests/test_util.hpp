#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "recap/constraints.hpp"
#include "recap/histories.hpp"

namespace testutil {

inline recap::History h(const std::string& digits) {
  auto parsed = recap::History::parse(digits);
  if (!parsed) throw std::invalid_argument("bad history literal: " + digits);
  return *parsed;
}

// Counts addressed by history string, everything else zero.
inline recap::CountVector counts_at(
    recap::Alphabet a, const recap::HistoryUniverse& u,
    const std::vector<std::pair<std::string, std::int64_t>>& entries) {
  recap::CountVector v = recap::zero_counts(a, u);
  for (const auto& [digits, c] : entries) {
    std::size_t idx = 0;
    switch (a) {
      case recap::Alphabet::kObserved: idx = u.observed_index(h(digits)); break;
      case recap::Alphabet::kLatentError: idx = u.latent_index(h(digits)); break;
      case recap::Alphabet::kLatentCapture: idx = u.capture_index(h(digits)); break;
    }
    v.counts[idx] += c;
  }
  return v;
}

}  // namespace testutil
