#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "recap/constraints.hpp"
#include "recap/histories.hpp"
#include "recap/rng.hpp"

namespace recap {

// Primitive error move at one occasion: a signed vector with -1 at `unseen`
// and `seen`, +1 at `false_neg` and `false_pos`. Adding it to x converts one
// correctly identified sighting at `occasion` into a matched false-negative/
// false-positive pair; subtracting removes such a pair. Every move lies in
// the kernel of the stacked constraint matrix.
struct Move {
  int occasion = 0;
  std::size_t unseen = 0;     // event 0 at occasion, becomes the false negative
  std::size_t seen = 0;       // event 1 at occasion, becomes the false positive
  std::size_t false_neg = 0;  // unseen with event 2 at occasion
  std::size_t false_pos = 0;  // seen with event 3 at occasion

  friend bool operator==(const Move&, const Move&) = default;
};

// One proposal: direction +1 applies the move (adds an error), -1 subtracts
// it. forward_logq is the log probability of the three-step draw given the
// direction; the 1/2 direction choice is excluded since it cancels in the
// Hastings ratio.
struct MoveDraw {
  Move move;
  int direction = 1;
  double forward_logq = 0.0;
};

// Per-history occasion bitmasks (bit t-1) driving move eligibility, plus the
// index arithmetic between a history and its event-modified variants.
class MoveTables {
 public:
  explicit MoveTables(const HistoryUniverse& universe);

  const HistoryUniverse& universe() const { return *universe_; }

  // Occasions after marking where an error pair could be introduced.
  std::uint32_t addable_zero_mask(std::size_t j) const { return zero_mask_[j]; }
  std::uint32_t addable_one_mask(std::size_t j) const { return one_mask_[j]; }
  // Occasions carrying an existing error event.
  std::uint32_t error_mask(std::size_t j) const { return two_mask_[j]; }
  std::uint32_t falsepos_mask(std::size_t j) const { return three_mask_[j]; }

  // Index of the history with the event at t raised by 2 (0 -> 2, 1 -> 3)
  // or lowered back. The caller guarantees the event is in range.
  std::size_t add_error(std::size_t j, int t) const { return shifted(j, t, +2); }
  std::size_t remove_error(std::size_t j, int t) const { return shifted(j, t, -2); }

 private:
  std::size_t shifted(std::size_t j, int t, int delta) const;

  const HistoryUniverse* universe_;
  std::vector<std::uint32_t> zero_mask_;
  std::vector<std::uint32_t> one_mask_;
  std::vector<std::uint32_t> two_mask_;
  std::vector<std::uint32_t> three_mask_;
  std::vector<std::uint64_t> digit_value_;  // 4^(T-t), occasion-indexed
};

// Latent counts with their positive-support index set, kept consistent while
// moves are applied and undone.
struct LatentConfig {
  CountVector x;
  std::vector<std::size_t> support;      // indices with positive count, unordered
  std::vector<std::int32_t> where;       // position in support, -1 if absent

  static LatentConfig from(CountVector counts);

  std::int64_t count(std::size_t j) const { return x.counts[j]; }
  void add(std::size_t j, std::int64_t delta);
};

// Constructs the move determined by (unseen, seen, occasion). Throws
// std::invalid_argument when the events at `occasion` are not 0/1 or the
// occasion does not lie strictly after both marking occasions.
Move make_move(std::size_t unseen, std::size_t seen, int occasion, const MoveTables& tables);

// x += direction * move. Updates the support set; entries may only touch
// zero, never go negative, when the draw came from the matching sampler.
void apply_move(LatentConfig& cfg, const Move& move, int direction);

// Three-step draw of an error-adding move: a history with a free occasion,
// one of its free occasions, and a corruptible sighting at that occasion.
// Returns nothing when the draw dead-ends; the chain then holds still.
std::optional<MoveDraw> sample_add_move(const LatentConfig& cfg, const MoveTables& tables,
                                        Rng& rng);

// Mirror draw removing an existing false-negative/false-positive pair.
std::optional<MoveDraw> sample_remove_move(const LatentConfig& cfg, const MoveTables& tables,
                                           Rng& rng);

// Log probability that the mirrored draw at the proposed configuration
// produces the inverse of `draw`; -inf if the inverse draw is impossible.
double reverse_logq(const LatentConfig& proposed, const MoveDraw& draw,
                    const MoveTables& tables);

// Exhaustive move sets at x, for tests and the exact proposal distribution.
std::vector<Move> enumerate_addable(const CountVector& x, const MoveTables& tables);
std::vector<Move> enumerate_removable(const CountVector& x, const MoveTables& tables);

// Every move over the whole alphabet, independent of x: the static basis for
// the fixed-basis baseline sampler. Throws when T exceeds cap_occasions; the
// count grows too fast to enumerate beyond small studies.
std::vector<Move> static_full_basis(const HistoryUniverse& universe, int cap_occasions = 4);

}  // namespace recap
