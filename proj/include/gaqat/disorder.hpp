#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gaqat {

/// sgn with sgn(0) = 0.
inline int sign_of(double g) { return g > 0.0 ? 1 : (g < 0.0 ? -1 : 0); }

/// Two adjacent signs flip only when both are nonzero and opposite.
inline bool is_flip(int previous, int current) { return previous * current < 0; }

/// Sliding window over the last `capacity` gradient signs of one scale, with an
/// incrementally maintained count of adjacent sign flips.
class SignWindow {
public:
    explicit SignWindow(std::size_t capacity);

    void push(int sign);

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return size_; }
    bool full() const { return size_ == capacity_; }
    std::size_t flips() const { return flips_; }

    /// Oldest-first copy of the buffered signs.
    std::vector<std::int8_t> signs() const;

    /// flips / capacity once the window is full; nullopt before that.
    std::optional<double> disorder() const;

private:
    std::int8_t at(std::size_t i) const { return ring_[(head_ + i) % capacity_]; }

    std::size_t capacity_;
    std::vector<std::int8_t> ring_;
    std::size_t head_ = 0;
    std::size_t size_ = 0;
    std::size_t flips_ = 0;
};

/// Per-scale sign windows keyed by quantizer id.
class DisorderTracker {
public:
    DisorderTracker(std::size_t window, std::span<const std::string> ids);

    void record(const std::string& id, double gradient);

    std::optional<double> disorder(const std::string& id) const;

    /// True once every registered window is full.
    bool ready() const;

    const SignWindow& window(const std::string& id) const;
    std::size_t window_length() const { return window_; }
    std::vector<std::string> ids() const;

private:
    std::size_t window_;
    std::map<std::string, SignWindow> windows_;
};

/// Gradient disorder straight from its definition: over the K-long sequence, count
/// positions j in 1..K-1 where sgn(g_j) and sgn(g_{j+1}) are opposite, divided by K.
double disorder_of(std::span<const double> gradients);

}  // namespace gaqat
