#pragma once

// Receiver-side reordering.
//
// Both managers share one windowed jitter estimator that yields the tolerated
// lateness (lag) after every arrival. They differ only in discipline:
//
//  * WatermarkReorderer (out-of-order): the watermark is max over arrivals of
//    (ts - lag); everything pending below it is released at once and a packet
//    arriving below it is dropped.
//  * ReorderBuffer (in-order): a buffer sized from the lag releases one
//    smallest-timestamp packet per arrival once full, so a missing
//    predecessor holds back everything behind it.
//
// With no reordering the two emit identically.
//
// Managers are event driven: state only changes when a packet arrives, so
// every emission is stamped with the arrival time that triggered it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vcsim/errors.hpp"
#include "vcsim/types.hpp"

namespace vcsim {

struct Packet {
  std::uint64_t seq = 0;
  Millis ts = 0;       // generation time
  Millis arrival = 0;  // arrival at the receiver
  std::uint32_t size = 160;
};

struct Emission {
  Packet packet;
  Millis emitted_at = 0;
};

struct ArrivalOutcome {
  bool dropped = false;
  std::vector<Emission> emitted;
};

struct JitterConfig {
  Millis window_ms = 2000;
  Millis bin_ms = 1;
  double percentile = 0.95;
  Millis loss_cost_ms = 100;
  Millis initial_lag_ms = 0;
  Millis max_lag_ms = 10000;
  bool update_on_drop = true;

  void validate() const {
    if (!(window_ms > 0)) throw ValidationError("window_ms must be > 0");
    if (!(bin_ms > 0)) throw ValidationError("bin_ms must be > 0");
    if (!(percentile > 0 && percentile <= 1)) throw ValidationError("percentile must be in (0,1]");
    if (loss_cost_ms < 0) throw ValidationError("loss_cost_ms must be >= 0");
    if (initial_lag_ms < 0 || max_lag_ms < initial_lag_ms)
      throw ValidationError("need 0 <= initial_lag_ms <= max_lag_ms");
  }
};

// Inter-arrival delay variation between consecutive arrivals.
inline Millis jitter_sample(const Packet& prev, const Packet& cur) {
  return std::abs((cur.arrival - prev.arrival) - (cur.ts - prev.ts));
}

// Jitter samples from arrivals within the last window_ms, binned at bin_ms.
class JitterHistogram {
public:
  explicit JitterHistogram(Millis window_ms = 2000, Millis bin_ms = 1)
      : window_ms_(window_ms), bin_ms_(bin_ms) {}

  void add(Millis arrival, Millis jitter) {
    evict(arrival);
    const auto bin = static_cast<std::size_t>(std::floor(jitter / bin_ms_));
    if (bin >= bins_.size()) bins_.resize(bin + 1, 0);
    ++bins_[bin];
    ++total_;
    window_.push_back({arrival, bin});
  }

  void evict(Millis now) {
    while (!window_.empty() && window_.front().arrival < now - window_ms_) {
      --bins_[window_.front().bin];
      --total_;
      window_.pop_front();
    }
    while (!bins_.empty() && bins_.back() == 0) bins_.pop_back();
  }

  std::uint64_t total() const { return total_; }
  bool empty() const { return total_ == 0; }
  Millis bin_ms() const { return bin_ms_; }
  const std::vector<std::uint64_t>& bins() const { return bins_; }

  // Largest populated bin edge, in ms.
  Millis max_jitter() const { return bins_.empty() ? 0.0 : static_cast<double>(bins_.size() - 1) * bin_ms_; }

  // Nearest-rank quantile, reported at the lower edge of its bin.
  Millis quantile(double p) const {
    if (total_ == 0) return 0;
    auto rank = static_cast<std::uint64_t>(std::ceil(p * static_cast<double>(total_)));
    rank = std::clamp<std::uint64_t>(rank, 1, total_);
    std::uint64_t acc = 0;
    for (std::size_t b = 0; b < bins_.size(); ++b) {
      acc += bins_[b];
      if (acc >= rank) return static_cast<double>(b) * bin_ms_;
    }
    return max_jitter();
  }

  // Fraction of samples whose bin edge is <= x.
  double cdf(Millis x) const {
    if (total_ == 0) return 1.0;
    const auto last = static_cast<std::ptrdiff_t>(std::floor(x / bin_ms_));
    std::uint64_t acc = 0;
    for (std::ptrdiff_t b = 0; b <= last && b < static_cast<std::ptrdiff_t>(bins_.size()); ++b)
      acc += bins_[static_cast<std::size_t>(b)];
    return static_cast<double>(acc) / static_cast<double>(total_);
  }

private:
  struct Entry {
    Millis arrival;
    std::size_t bin;
  };

  Millis window_ms_;
  Millis bin_ms_;
  std::deque<Entry> window_;
  std::vector<std::uint64_t> bins_;
  std::uint64_t total_ = 0;
};

// Lag minimizing max(0, i - lag) + loss_cost * (1 - F(i)) over bin edges
// i in [0, max jitter]; ties go to the smaller i.
inline Millis min_cost_lag(const JitterHistogram& hist, Millis lag, Millis loss_cost) {
  const auto& bins = hist.bins();
  const double total = static_cast<double>(hist.total());
  Millis best_i = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  std::uint64_t acc = 0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    acc += bins[b];
    const Millis i = static_cast<double>(b) * hist.bin_ms();
    const double cost = std::max(0.0, i - lag) + loss_cost * (1.0 - static_cast<double>(acc) / total);
    if (cost < best_cost) {
      best_cost = cost;
      best_i = i;
    }
  }
  return best_i;
}

// Lag after observing one more arrival: an in-order arrival takes the
// percentile of the window, an out-of-order arrival can only raise the lag.
inline Millis estimate_lag(const JitterHistogram& hist, bool in_order, Millis prev_lag,
                           const JitterConfig& cfg) {
  if (hist.empty()) return std::min(prev_lag, cfg.max_lag_ms);
  Millis lag = in_order ? hist.quantile(cfg.percentile)
                        : std::max(prev_lag, min_cost_lag(hist, prev_lag, cfg.loss_cost_ms));
  return std::clamp(lag, 0.0, cfg.max_lag_ms);
}

class LagEstimator {
public:
  explicit LagEstimator(const JitterConfig& cfg)
      : cfg_(cfg), hist_(cfg.window_ms, cfg.bin_ms), lag_(cfg.initial_lag_ms) {
    cfg_.validate();
  }

  Millis observe(const Packet& p) {
    if (has_prev_) hist_.add(p.arrival, jitter_sample(prev_, p));
    else hist_.evict(p.arrival);
    prev_ = p;
    has_prev_ = true;
    const bool in_order = !has_latest_ || p.ts > latest_ts_;
    if (in_order) {
      latest_ts_ = p.ts;
      has_latest_ = true;
    }
    lag_ = estimate_lag(hist_, in_order, lag_, cfg_);
    return lag_;
  }

  Millis lag() const { return lag_; }
  const JitterHistogram& histogram() const { return hist_; }
  const JitterConfig& config() const { return cfg_; }

private:
  JitterConfig cfg_;
  JitterHistogram hist_;
  Millis lag_;
  Packet prev_{};
  bool has_prev_ = false;
  Millis latest_ts_ = 0;
  bool has_latest_ = false;
};

inline constexpr Millis kNoWatermark = -std::numeric_limits<Millis>::infinity();

// Watermark after seeing a packet: max(last published, ts - lag).
inline Millis update_wm(Millis last_published, Millis ts, Millis lag) {
  return std::max(last_published, ts - lag);
}

class WatermarkReorderer {
public:
  Millis watermark() const { return wm_; }
  std::size_t pending() const { return queue_.size(); }

  // Caller supplies the lag in force at this arrival.
  ArrivalOutcome on_arrival(const Packet& p, Millis lag) {
    check_order(p.arrival);
    ArrivalOutcome out;
    if (p.ts < wm_) {
      out.dropped = true;
      return out;
    }
    queue_.emplace(Key{p.ts, p.seq}, p);
    wm_ = update_wm(wm_, p.ts, lag);
    while (!queue_.empty() && queue_.begin()->first.ts < wm_) {
      out.emitted.push_back({queue_.begin()->second, p.arrival});
      queue_.erase(queue_.begin());
    }
    return out;
  }

  std::vector<Emission> flush(Millis end) {
    std::vector<Emission> out;
    for (auto& [key, pkt] : queue_) out.push_back({pkt, end});
    queue_.clear();
    return out;
  }

private:
  struct Key {
    Millis ts;
    std::uint64_t seq;
    friend auto operator<=>(const Key&, const Key&) = default;
  };

  void check_order(Millis arrival) {
    if (arrival < last_arrival_) throw std::logic_error("arrivals must be fed in time order");
    last_arrival_ = arrival;
  }

  Millis wm_ = kNoWatermark;
  Millis last_arrival_ = -std::numeric_limits<Millis>::infinity();
  std::map<Key, Packet> queue_;
};

// In-order buffer whose size tracks the lag: it holds floor(target/interval)+1
// packets and every arrival beyond that pushes out the smallest timestamp.
// A packet older than the last one pushed out is too late.
class ReorderBuffer {
public:
  explicit ReorderBuffer(Millis interval) : interval_(interval) {
    if (!(interval > 0)) throw ValidationError("packet interval must be > 0");
  }

  static std::size_t capacity_for(Millis target, Millis interval) {
    return static_cast<std::size_t>(std::floor(std::max(target, 0.0) / interval)) + 1;
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t pending() const { return pending_.size(); }
  Millis last_emitted_ts() const { return last_out_; }
  bool is_late(const Packet& p) const { return p.ts < last_out_; }

  ArrivalOutcome on_arrival(const Packet& p, Millis target_delay) {
    if (p.arrival < last_arrival_) throw std::logic_error("arrivals must be fed in time order");
    last_arrival_ = p.arrival;
    capacity_ = capacity_for(target_delay, interval_);
    ArrivalOutcome out;
    if (is_late(p)) {
      out.dropped = true;
      return out;
    }
    pending_.emplace(Key{p.ts, p.seq}, p);
    while (pending_.size() > capacity_) {
      auto head = pending_.begin();
      last_out_ = head->first.ts;
      out.emitted.push_back({head->second, p.arrival});
      pending_.erase(head);
    }
    return out;
  }

  std::vector<Emission> flush(Millis end) {
    std::vector<Emission> out;
    for (auto& [key, pkt] : pending_) {
      out.push_back({pkt, end});
      last_out_ = key.ts;
    }
    pending_.clear();
    return out;
  }

private:
  struct Key {
    Millis ts;
    std::uint64_t seq;
    friend auto operator<=>(const Key&, const Key&) = default;
  };

  Millis interval_;
  std::size_t capacity_ = 1;
  Millis last_out_ = kNoWatermark;
  Millis last_arrival_ = -std::numeric_limits<Millis>::infinity();
  std::map<Key, Packet> pending_;
};

enum class JitterKind { buffer, watermark };

inline JitterKind parse_jitter(std::string_view s) {
  if (s == "buffer" || s == "BF") return JitterKind::buffer;
  if (s == "watermark" || s == "WM") return JitterKind::watermark;
  throw ValidationError("unknown jitter manager '" + std::string(s) + "'");
}

inline std::string_view to_string(JitterKind k) {
  return k == JitterKind::buffer ? "buffer" : "watermark";
}

class JitterManager {
public:
  virtual ~JitterManager() = default;
  virtual ArrivalOutcome on_arrival(const Packet& p) = 0;
  virtual std::vector<Emission> flush(Millis end) = 0;
  virtual Millis lag() const = 0;
};

class WmJitterManager final : public JitterManager {
public:
  explicit WmJitterManager(const JitterConfig& cfg) : estimator_(cfg) {}

  ArrivalOutcome on_arrival(const Packet& p) override {
    const bool late = p.ts < reorderer_.watermark();
    if (late && !estimator_.config().update_on_drop) return reorderer_.on_arrival(p, estimator_.lag());
    return reorderer_.on_arrival(p, estimator_.observe(p));
  }

  std::vector<Emission> flush(Millis end) override { return reorderer_.flush(end); }
  Millis lag() const override { return estimator_.lag(); }
  Millis watermark() const { return reorderer_.watermark(); }
  const LagEstimator& estimator() const { return estimator_; }

private:
  LagEstimator estimator_;
  WatermarkReorderer reorderer_;
};

class BufferJitterManager final : public JitterManager {
public:
  BufferJitterManager(const JitterConfig& cfg, Millis interval)
      : estimator_(cfg), buffer_(interval) {}

  ArrivalOutcome on_arrival(const Packet& p) override {
    if (buffer_.is_late(p) && !estimator_.config().update_on_drop) return buffer_.on_arrival(p, estimator_.lag());
    return buffer_.on_arrival(p, estimator_.observe(p));
  }

  std::vector<Emission> flush(Millis end) override { return buffer_.flush(end); }
  Millis lag() const override { return estimator_.lag(); }
  const ReorderBuffer& buffer() const { return buffer_; }
  const LagEstimator& estimator() const { return estimator_; }

private:
  LagEstimator estimator_;
  ReorderBuffer buffer_;
};

inline std::unique_ptr<JitterManager> make_jitter_manager(JitterKind kind, const JitterConfig& cfg,
                                                          Millis interval) {
  if (kind == JitterKind::watermark) return std::make_unique<WmJitterManager>(cfg);
  return std::make_unique<BufferJitterManager>(cfg, interval);
}

}  // namespace vcsim
