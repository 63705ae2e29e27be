#include "recap/basis.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "recap/logprob.hpp"

namespace recap {

namespace {

// Zero-based occasion bit of the r-th set bit, r < popcount(mask).
int nth_set_occasion(std::uint32_t mask, std::uint64_t r) {
  while (r--) mask &= mask - 1;
  return std::countr_zero(mask) + 1;
}

}  // namespace

MoveTables::MoveTables(const HistoryUniverse& universe) : universe_(&universe) {
  const std::size_t J = universe.latent_size();
  const int T = universe.num_occasions();
  zero_mask_.assign(J, 0);
  one_mask_.assign(J, 0);
  two_mask_.assign(J, 0);
  three_mask_.assign(J, 0);
  for (std::size_t j = 0; j < J; ++j) {
    const int marking = universe.latent_marking(j);
    for (int t = 1; t <= T; ++t) {
      const std::uint32_t bit = 1u << (t - 1);
      switch (universe.latent_event(j, t)) {
        case kEventNone:
          if (t > marking) zero_mask_[j] |= bit;
          break;
        case kEventSeen:
          if (t > marking) one_mask_[j] |= bit;
          break;
        case kEventFalseNeg:
          two_mask_[j] |= bit;
          break;
        default:
          three_mask_[j] |= bit;
          break;
      }
    }
  }
  digit_value_.assign(static_cast<std::size_t>(T) + 1, 0);
  std::uint64_t v = 1;
  for (int t = T; t >= 1; --t) {
    digit_value_[static_cast<std::size_t>(t)] = v;
    v *= 4;
  }
}

std::size_t MoveTables::shifted(std::size_t j, int t, int delta) const {
  const auto code = static_cast<std::int64_t>(universe_->latent_code(j)) +
                    delta * static_cast<std::int64_t>(digit_value_[static_cast<std::size_t>(t)]);
  const auto idx = universe_->find_latent_by_code(static_cast<std::uint64_t>(code));
  if (!idx) throw std::logic_error("event shift left the latent alphabet");
  return *idx;
}

LatentConfig LatentConfig::from(CountVector counts) {
  if (counts.alphabet != Alphabet::kLatentError || !counts.nonnegative()) {
    throw std::invalid_argument("latent configuration must be nonnegative error counts");
  }
  LatentConfig cfg{std::move(counts), {}, {}};
  cfg.where.assign(cfg.x.counts.size(), -1);
  for (std::size_t j = 0; j < cfg.x.counts.size(); ++j) {
    if (cfg.x.counts[j] > 0) {
      cfg.where[j] = static_cast<std::int32_t>(cfg.support.size());
      cfg.support.push_back(j);
    }
  }
  return cfg;
}

void LatentConfig::add(std::size_t j, std::int64_t delta) {
  std::int64_t& v = x.counts[j];
  const bool was_positive = v > 0;
  v += delta;
  if (v < 0) throw std::logic_error("latent count driven negative");
  if (was_positive && v == 0) {
    const std::int32_t pos = where[j];
    const std::size_t last = support.back();
    support[static_cast<std::size_t>(pos)] = last;
    where[last] = pos;
    support.pop_back();
    where[j] = -1;
  } else if (!was_positive && v > 0) {
    where[j] = static_cast<std::int32_t>(support.size());
    support.push_back(j);
  }
}

Move make_move(std::size_t unseen, std::size_t seen, int occasion, const MoveTables& tables) {
  const std::uint32_t bit = 1u << (occasion - 1);
  if (occasion < 2 || occasion > tables.universe().num_occasions()) {
    throw std::invalid_argument("move occasion out of range");
  }
  if (!(tables.addable_zero_mask(unseen) & bit)) {
    throw std::invalid_argument("history has no introducible false negative at this occasion");
  }
  if (!(tables.addable_one_mask(seen) & bit)) {
    throw std::invalid_argument("history has no corruptible sighting at this occasion");
  }
  return Move{occasion, unseen, seen, tables.add_error(unseen, occasion),
              tables.add_error(seen, occasion)};
}

void apply_move(LatentConfig& cfg, const Move& move, int direction) {
  if (direction == 1) {
    cfg.add(move.unseen, -1);
    cfg.add(move.seen, -1);
    cfg.add(move.false_neg, 1);
    cfg.add(move.false_pos, 1);
  } else {
    cfg.add(move.false_neg, -1);
    cfg.add(move.false_pos, -1);
    cfg.add(move.unseen, 1);
    cfg.add(move.seen, 1);
  }
}

std::optional<MoveDraw> sample_add_move(const LatentConfig& cfg, const MoveTables& tables,
                                        Rng& rng) {
  std::vector<std::size_t> candidates;
  candidates.reserve(cfg.support.size());
  for (std::size_t j : cfg.support) {
    if (tables.addable_zero_mask(j) != 0) candidates.push_back(j);
  }
  if (candidates.empty()) return std::nullopt;
  const double log_n1 = std::log(static_cast<double>(candidates.size()));
  const std::size_t unseen = candidates[rng.uniform_int(candidates.size())];

  const std::uint32_t zeros = tables.addable_zero_mask(unseen);
  const int n2 = std::popcount(zeros);
  const int occasion = nth_set_occasion(zeros, rng.uniform_int(static_cast<std::uint64_t>(n2)));

  const std::uint32_t bit = 1u << (occasion - 1);
  candidates.clear();
  for (std::size_t j : cfg.support) {
    if (tables.addable_one_mask(j) & bit) candidates.push_back(j);
  }
  if (candidates.empty()) return std::nullopt;
  const std::size_t seen = candidates[rng.uniform_int(candidates.size())];

  const double logq = -log_n1 - std::log(static_cast<double>(n2)) -
                      std::log(static_cast<double>(candidates.size()));
  return MoveDraw{Move{occasion, unseen, seen, tables.add_error(unseen, occasion),
                       tables.add_error(seen, occasion)},
                  1, logq};
}

std::optional<MoveDraw> sample_remove_move(const LatentConfig& cfg, const MoveTables& tables,
                                           Rng& rng) {
  std::vector<std::size_t> candidates;
  candidates.reserve(cfg.support.size());
  for (std::size_t j : cfg.support) {
    if (tables.error_mask(j) != 0) candidates.push_back(j);
  }
  if (candidates.empty()) return std::nullopt;
  const double log_n1 = std::log(static_cast<double>(candidates.size()));
  const std::size_t false_neg = candidates[rng.uniform_int(candidates.size())];

  const std::uint32_t errors = tables.error_mask(false_neg);
  const int n2 = std::popcount(errors);
  const int occasion = nth_set_occasion(errors, rng.uniform_int(static_cast<std::uint64_t>(n2)));

  const std::uint32_t bit = 1u << (occasion - 1);
  candidates.clear();
  for (std::size_t j : cfg.support) {
    if (tables.falsepos_mask(j) & bit) candidates.push_back(j);
  }
  if (candidates.empty()) return std::nullopt;  // unreachable on a balanced fibre
  const std::size_t false_pos = candidates[rng.uniform_int(candidates.size())];

  const double logq = -log_n1 - std::log(static_cast<double>(n2)) -
                      std::log(static_cast<double>(candidates.size()));
  return MoveDraw{Move{occasion, tables.remove_error(false_neg, occasion),
                       tables.remove_error(false_pos, occasion), false_neg, false_pos},
                  -1, logq};
}

double reverse_logq(const LatentConfig& proposed, const MoveDraw& draw,
                    const MoveTables& tables) {
  const Move& m = draw.move;
  const std::uint32_t bit = 1u << (m.occasion - 1);
  std::int64_t n1 = 0;
  std::int64_t n3 = 0;
  if (draw.direction == 1) {
    // Inverse draw removes the pair just added.
    if (proposed.count(m.false_neg) <= 0 || proposed.count(m.false_pos) <= 0) return kNegInf;
    for (std::size_t j : proposed.support) {
      if (tables.error_mask(j) != 0) ++n1;
      if (tables.falsepos_mask(j) & bit) ++n3;
    }
    const int n2 = std::popcount(tables.error_mask(m.false_neg));
    return -std::log(static_cast<double>(n1)) - std::log(static_cast<double>(n2)) -
           std::log(static_cast<double>(n3));
  }
  // Inverse draw re-adds the pair just removed.
  if (proposed.count(m.unseen) <= 0 || proposed.count(m.seen) <= 0) return kNegInf;
  for (std::size_t j : proposed.support) {
    if (tables.addable_zero_mask(j) != 0) ++n1;
    if (tables.addable_one_mask(j) & bit) ++n3;
  }
  const int n2 = std::popcount(tables.addable_zero_mask(m.unseen));
  return -std::log(static_cast<double>(n1)) - std::log(static_cast<double>(n2)) -
         std::log(static_cast<double>(n3));
}

std::vector<Move> enumerate_addable(const CountVector& x, const MoveTables& tables) {
  const int T = tables.universe().num_occasions();
  std::vector<Move> moves;
  for (std::size_t j0 = 0; j0 < x.counts.size(); ++j0) {
    if (x.counts[j0] <= 0 || tables.addable_zero_mask(j0) == 0) continue;
    for (int t = 2; t <= T; ++t) {
      const std::uint32_t bit = 1u << (t - 1);
      if (!(tables.addable_zero_mask(j0) & bit)) continue;
      for (std::size_t j1 = 0; j1 < x.counts.size(); ++j1) {
        if (x.counts[j1] <= 0 || !(tables.addable_one_mask(j1) & bit)) continue;
        moves.push_back(make_move(j0, j1, t, tables));
      }
    }
  }
  return moves;
}

std::vector<Move> enumerate_removable(const CountVector& x, const MoveTables& tables) {
  const int T = tables.universe().num_occasions();
  std::vector<Move> moves;
  for (std::size_t j2 = 0; j2 < x.counts.size(); ++j2) {
    if (x.counts[j2] <= 0 || tables.error_mask(j2) == 0) continue;
    for (int t = 2; t <= T; ++t) {
      const std::uint32_t bit = 1u << (t - 1);
      if (!(tables.error_mask(j2) & bit)) continue;
      for (std::size_t j3 = 0; j3 < x.counts.size(); ++j3) {
        if (x.counts[j3] <= 0 || !(tables.falsepos_mask(j3) & bit)) continue;
        moves.push_back(Move{t, tables.remove_error(j2, t), tables.remove_error(j3, t), j2, j3});
      }
    }
  }
  return moves;
}

std::vector<Move> static_full_basis(const HistoryUniverse& universe, int cap_occasions) {
  const int T = universe.num_occasions();
  if (T > cap_occasions) {
    throw std::invalid_argument(
        "full move basis grows combinatorially; refusing to enumerate beyond the cap");
  }
  MoveTables tables(universe);
  std::vector<Move> moves;
  for (int t = 2; t <= T; ++t) {
    const std::uint32_t bit = 1u << (t - 1);
    std::vector<std::size_t> zeros;
    std::vector<std::size_t> ones;
    for (std::size_t j = 0; j < universe.latent_size(); ++j) {
      if (tables.addable_zero_mask(j) & bit) zeros.push_back(j);
      if (tables.addable_one_mask(j) & bit) ones.push_back(j);
    }
    for (std::size_t j0 : zeros) {
      for (std::size_t j1 : ones) moves.push_back(make_move(j0, j1, t, tables));
    }
  }
  return moves;
}

}  // namespace recap
