#include "socest/window_stats.hpp"

#include "socest/errors.hpp"

namespace socest {

WindowStats::WindowStats(std::size_t capacity, std::size_t resync_period)
    : ring_(capacity), resync_period_(resync_period) {
    if (capacity == 0) throw DomainError("window: capacity must be at least 1");
    if (resync_period == 0) throw DomainError("window: resync period must be at least 1");
}

void WindowStats::push(double innovation_sq, double posterior_term) {
    Entry& slot = ring_[head_];
    if (full()) {
        sum_innovation_ -= slot.innovation_sq;
        sum_posterior_ -= slot.posterior_term;
    } else {
        ++count_;
    }
    slot = {innovation_sq, posterior_term};
    sum_innovation_ += innovation_sq;
    sum_posterior_ += posterior_term;
    head_ = (head_ + 1) % ring_.size();

    if (++pushes_since_resync_ >= resync_period_) resync();
}

void WindowStats::clear() {
    for (auto& e : ring_) e = {};
    head_ = count_ = pushes_since_resync_ = 0;
    sum_innovation_ = sum_posterior_ = 0.0;
}

double WindowStats::innovation_mean() const {
    return count_ == 0 ? 0.0 : sum_innovation_ / static_cast<double>(count_);
}

double WindowStats::posterior_mean() const {
    return count_ == 0 ? 0.0 : sum_posterior_ / static_cast<double>(count_);
}

void WindowStats::resync() {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < count_; ++i) {
        a += innovation_at(i);
        b += posterior_at(i);
    }
    sum_innovation_ = a;
    sum_posterior_ = b;
    pushes_since_resync_ = 0;
}

}  // namespace socest
