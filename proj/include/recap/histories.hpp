#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace recap {

// Per-occasion event codes in a latent error history.
//   0  not resighted
//   1  resighted and correctly identified
//   2  resighted but recorded as another individual (false negative)
//   3  another individual's sighting recorded as this one (false positive)
inline constexpr std::uint8_t kEventNone = 0;
inline constexpr std::uint8_t kEventSeen = 1;
inline constexpr std::uint8_t kEventFalseNeg = 2;
inline constexpr std::uint8_t kEventFalsePos = 3;

struct StudyShape {
  int num_occasions = 0;  // T

  // J = (4^T - 1)/3 - 1 grows fast; the cap keeps every packed code and index
  // comfortably inside 64-bit integers.
  static constexpr int kMaxOccasions = 16;

  void validate() const;  // throws std::invalid_argument unless 2 <= T <= 16
};

// An event string over occasions 1..T. Observed and latent capture histories
// use only events {0,1}; latent error histories use {0,1,2,3}.
struct History {
  std::vector<std::uint8_t> events;

  History() = default;
  explicit History(std::vector<std::uint8_t> ev) : events(std::move(ev)) {}

  int length() const { return static_cast<int>(events.size()); }

  // Occasions are 1-based throughout the API.
  std::uint8_t event(int t) const { return events[static_cast<std::size_t>(t - 1)]; }

  // First occasion with a nonzero event; 0 if the history is all zeros.
  int marking_occasion() const;

  bool is_binary() const;

  // Numeral value of the event string, occasion 1 most significant.
  std::uint64_t code(int radix) const;

  std::string str() const;
  static std::optional<History> parse(const std::string& digits);

  friend bool operator==(const History&, const History&) = default;
  friend auto operator<=>(const History&, const History&) = default;
};

// Validity rule shared by all three alphabets: the first nonzero event is a 1
// (the marking) and it happens before the final occasion. Histories violating
// it are conditioned out of the likelihood or are impossible before marking.
bool is_valid_history(const History& h);

// Valid latent error history: validity rule and events within {0,1,2,3}.
bool is_valid_latent(const History& h);

// Collapse maps between alphabets.
History observed_of(const History& latent);  // omega_t = 1 iff event in {1,3}
History capture_of(const History& latent);   // xi_t = 1 iff event in {1,2}

// Canonical enumerations of the three alphabets for a fixed T, in ascending
// numeral order (base 4 for latent error, base 2 for the binary alphabets),
// with O(1) event access and index lookup by history.
class HistoryUniverse {
 public:
  explicit HistoryUniverse(StudyShape shape);

  const StudyShape& shape() const { return shape_; }
  int num_occasions() const { return shape_.num_occasions; }

  std::size_t observed_size() const { return binary_count_; }        // I = 2^T - 2
  std::size_t latent_size() const { return latent_count_; }          // J = (4^T - 1)/3 - 1
  std::size_t capture_size() const { return binary_count_; }         // K = 2^T - 2

  History observed_history(std::size_t i) const { return binary_history(i); }
  History capture_history(std::size_t k) const { return binary_history(k); }
  History latent_history(std::size_t j) const;

  std::uint8_t latent_event(std::size_t j, int t) const {
    return latent_events_[j * static_cast<std::size_t>(shape_.num_occasions) +
                          static_cast<std::size_t>(t - 1)];
  }
  std::uint8_t binary_event(std::size_t k, int t) const {
    return binary_events_[k * static_cast<std::size_t>(shape_.num_occasions) +
                          static_cast<std::size_t>(t - 1)];
  }

  int latent_marking(std::size_t j) const { return latent_marking_[j]; }
  int binary_marking(std::size_t k) const { return binary_marking_[k]; }

  std::uint64_t latent_code(std::size_t j) const { return latent_codes_[j]; }
  // Index of the latent history with the given base-4 numeral value, if any.
  std::optional<std::size_t> find_latent_by_code(std::uint64_t code) const;

  std::optional<std::size_t> find_observed_index(const History& h) const {
    return find_binary_index(h);
  }
  std::optional<std::size_t> find_capture_index(const History& h) const {
    return find_binary_index(h);
  }
  std::optional<std::size_t> find_latent_index(const History& h) const;

  // Throwing variants for callers that require membership.
  std::size_t observed_index(const History& h) const;
  std::size_t capture_index(const History& h) const { return observed_index(h); }
  std::size_t latent_index(const History& h) const;

 private:
  History binary_history(std::size_t k) const;
  std::optional<std::size_t> find_binary_index(const History& h) const;

  StudyShape shape_;
  std::size_t binary_count_ = 0;
  std::size_t latent_count_ = 0;
  // Flat T-byte rows, one per history, in canonical order.
  std::vector<std::uint8_t> binary_events_;
  std::vector<std::uint8_t> latent_events_;
  std::vector<std::uint8_t> binary_marking_;
  std::vector<std::uint8_t> latent_marking_;
  // Numeral codes in canonical (ascending) order, for index lookup.
  std::vector<std::uint64_t> binary_codes_;
  std::vector<std::uint64_t> latent_codes_;
};

HistoryUniverse enumerate_universe(StudyShape shape);

}  // namespace recap
