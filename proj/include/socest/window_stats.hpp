#pragma once

#include <cstddef>
#include <vector>

namespace socest {

// Fixed-capacity circular buffer of the two per-step summands used by the
// adaptive filters:
//   channel 0: (e-)^2              squared innovation
//   channel 1: (e+)^2 + C P+ C^T   post-fit measurement term
// Running sums make every push and every mean O(1). The sums are rebuilt
// from the ring every `resync_period` pushes to bound floating-point drift.
class WindowStats {
public:
    static constexpr std::size_t kDefaultResyncPeriod = 4096;

    explicit WindowStats(std::size_t capacity, std::size_t resync_period = kDefaultResyncPeriod);

    void push(double innovation_sq, double posterior_term);
    void clear();

    std::size_t capacity() const { return ring_.size(); }
    std::size_t size() const { return count_; }
    bool full() const { return count_ == ring_.size(); }

    double innovation_sum() const { return sum_innovation_; }
    double posterior_sum() const { return sum_posterior_; }
    // Means divide by the fill count; both are 0 for an empty window.
    double innovation_mean() const;
    double posterior_mean() const;

    // i-th oldest retained entry, i < size().
    double innovation_at(std::size_t i) const { return ring_[index(i)].innovation_sq; }
    double posterior_at(std::size_t i) const { return ring_[index(i)].posterior_term; }

private:
    struct Entry {
        double innovation_sq = 0.0;
        double posterior_term = 0.0;
    };

    std::size_t index(std::size_t i) const {
        const std::size_t oldest = (head_ + ring_.size() - count_) % ring_.size();
        return (oldest + i) % ring_.size();
    }
    void resync();

    std::vector<Entry> ring_;
    std::size_t head_ = 0;  // next write slot
    std::size_t count_ = 0;
    std::size_t resync_period_;
    std::size_t pushes_since_resync_ = 0;
    double sum_innovation_ = 0.0;
    double sum_posterior_ = 0.0;
};

}  // namespace socest
