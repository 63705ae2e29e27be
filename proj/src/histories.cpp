#include "recap/histories.hpp"

#include <algorithm>
#include <stdexcept>

namespace recap {

void StudyShape::validate() const {
  if (num_occasions < 2) {
    throw std::invalid_argument("study needs at least 2 capture occasions");
  }
  if (num_occasions > kMaxOccasions) {
    throw std::invalid_argument("study exceeds the supported occasion cap (16)");
  }
}

int History::marking_occasion() const {
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i] != 0) return static_cast<int>(i) + 1;
  }
  return 0;
}

bool History::is_binary() const {
  return std::all_of(events.begin(), events.end(), [](std::uint8_t e) { return e <= 1; });
}

std::uint64_t History::code(int radix) const {
  std::uint64_t v = 0;
  for (std::uint8_t e : events) v = v * static_cast<std::uint64_t>(radix) + e;
  return v;
}

std::string History::str() const {
  std::string s;
  s.reserve(events.size());
  for (std::uint8_t e : events) s.push_back(static_cast<char>('0' + e));
  return s;
}

std::optional<History> History::parse(const std::string& digits) {
  if (digits.empty()) return std::nullopt;
  History h;
  h.events.reserve(digits.size());
  for (char c : digits) {
    if (c < '0' || c > '3') return std::nullopt;
    h.events.push_back(static_cast<std::uint8_t>(c - '0'));
  }
  return h;
}

bool is_valid_history(const History& h) {
  const int s = h.marking_occasion();
  return s >= 1 && s < h.length() && h.event(s) == kEventSeen;
}

bool is_valid_latent(const History& h) {
  if (!is_valid_history(h)) return false;
  return std::all_of(h.events.begin(), h.events.end(), [](std::uint8_t e) { return e <= 3; });
}

History observed_of(const History& latent) {
  History out;
  out.events.resize(latent.events.size());
  for (std::size_t i = 0; i < latent.events.size(); ++i) {
    const std::uint8_t e = latent.events[i];
    out.events[i] = (e == kEventSeen || e == kEventFalsePos) ? 1 : 0;
  }
  return out;
}

History capture_of(const History& latent) {
  History out;
  out.events.resize(latent.events.size());
  for (std::size_t i = 0; i < latent.events.size(); ++i) {
    const std::uint8_t e = latent.events[i];
    out.events[i] = (e == kEventSeen || e == kEventFalseNeg) ? 1 : 0;
  }
  return out;
}

namespace {

// Emit all histories with marking occasion s and suffix digits < radix, in
// ascending numeral order. Blocks with later marking have smaller numerals,
// so the caller iterates s = T-1 down to 1.
template <typename Sink>
void emit_block(int T, int s, int radix, Sink&& sink) {
  std::vector<std::uint8_t> ev(static_cast<std::size_t>(T), 0);
  ev[static_cast<std::size_t>(s - 1)] = 1;
  const int suffix_len = T - s;
  for (;;) {
    sink(ev);
    int i = suffix_len - 1;  // odometer over positions s+1..T
    while (i >= 0) {
      auto& d = ev[static_cast<std::size_t>(s + i)];
      if (d + 1 < radix) {
        ++d;
        break;
      }
      d = 0;
      --i;
    }
    if (i < 0) break;
  }
}

}  // namespace

HistoryUniverse::HistoryUniverse(StudyShape shape) : shape_(shape) {
  shape_.validate();
  const int T = shape_.num_occasions;
  const std::size_t Ts = static_cast<std::size_t>(T);

  binary_count_ = (std::size_t{1} << T) - 2;
  std::uint64_t j_count = 0;
  for (int s = 1; s <= T - 1; ++s) j_count += std::uint64_t{1} << (2 * (T - s));
  latent_count_ = static_cast<std::size_t>(j_count);

  binary_events_.reserve(binary_count_ * Ts);
  binary_codes_.reserve(binary_count_);
  binary_marking_.reserve(binary_count_);
  latent_events_.reserve(latent_count_ * Ts);
  latent_codes_.reserve(latent_count_);
  latent_marking_.reserve(latent_count_);

  for (int s = T - 1; s >= 1; --s) {
    emit_block(T, s, 2, [&](const std::vector<std::uint8_t>& ev) {
      binary_events_.insert(binary_events_.end(), ev.begin(), ev.end());
      binary_marking_.push_back(static_cast<std::uint8_t>(s));
      std::uint64_t code = 0;
      for (std::uint8_t e : ev) code = code * 2 + e;
      binary_codes_.push_back(code);
    });
  }
  for (int s = T - 1; s >= 1; --s) {
    emit_block(T, s, 4, [&](const std::vector<std::uint8_t>& ev) {
      latent_events_.insert(latent_events_.end(), ev.begin(), ev.end());
      latent_marking_.push_back(static_cast<std::uint8_t>(s));
      std::uint64_t code = 0;
      for (std::uint8_t e : ev) code = code * 4 + e;
      latent_codes_.push_back(code);
    });
  }
}

History HistoryUniverse::binary_history(std::size_t k) const {
  const std::size_t Ts = static_cast<std::size_t>(shape_.num_occasions);
  return History(std::vector<std::uint8_t>(binary_events_.begin() + static_cast<std::ptrdiff_t>(k * Ts),
                                           binary_events_.begin() + static_cast<std::ptrdiff_t>((k + 1) * Ts)));
}

History HistoryUniverse::latent_history(std::size_t j) const {
  const std::size_t Ts = static_cast<std::size_t>(shape_.num_occasions);
  return History(std::vector<std::uint8_t>(latent_events_.begin() + static_cast<std::ptrdiff_t>(j * Ts),
                                           latent_events_.begin() + static_cast<std::ptrdiff_t>((j + 1) * Ts)));
}

std::optional<std::size_t> HistoryUniverse::find_binary_index(const History& h) const {
  if (h.length() != shape_.num_occasions || !h.is_binary() || !is_valid_history(h)) {
    return std::nullopt;
  }
  const std::uint64_t c = h.code(2);
  auto it = std::lower_bound(binary_codes_.begin(), binary_codes_.end(), c);
  if (it == binary_codes_.end() || *it != c) return std::nullopt;
  return static_cast<std::size_t>(it - binary_codes_.begin());
}

std::optional<std::size_t> HistoryUniverse::find_latent_index(const History& h) const {
  if (h.length() != shape_.num_occasions || !is_valid_latent(h)) return std::nullopt;
  return find_latent_by_code(h.code(4));
}

std::optional<std::size_t> HistoryUniverse::find_latent_by_code(std::uint64_t code) const {
  auto it = std::lower_bound(latent_codes_.begin(), latent_codes_.end(), code);
  if (it == latent_codes_.end() || *it != code) return std::nullopt;
  return static_cast<std::size_t>(it - latent_codes_.begin());
}

std::size_t HistoryUniverse::observed_index(const History& h) const {
  auto i = find_binary_index(h);
  if (!i) throw std::invalid_argument("history not in the observable alphabet: " + h.str());
  return *i;
}

std::size_t HistoryUniverse::latent_index(const History& h) const {
  auto i = find_latent_index(h);
  if (!i) throw std::invalid_argument("history not in the latent error alphabet: " + h.str());
  return *i;
}

HistoryUniverse enumerate_universe(StudyShape shape) { return HistoryUniverse(shape); }

}  // namespace recap
