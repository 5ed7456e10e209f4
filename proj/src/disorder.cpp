#include "gaqat/disorder.hpp"

#include "gaqat/errors.hpp"

namespace gaqat {

SignWindow::SignWindow(std::size_t capacity) : capacity_(capacity), ring_(capacity, 0) {
    if (capacity == 0) throw ConfigError("disorder window length must be positive");
}

void SignWindow::push(int sign) {
    const auto s = static_cast<std::int8_t>(sign);
    if (size_ > 0 && is_flip(at(size_ - 1), s)) ++flips_;
    if (size_ == capacity_) {
        if (size_ > 1 && is_flip(at(0), at(1))) --flips_;
        ring_[head_] = s;
        head_ = (head_ + 1) % capacity_;
    } else {
        ring_[(head_ + size_) % capacity_] = s;
        ++size_;
    }
}

std::vector<std::int8_t> SignWindow::signs() const {
    std::vector<std::int8_t> out(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = at(i);
    return out;
}

std::optional<double> SignWindow::disorder() const {
    if (!full()) return std::nullopt;
    return static_cast<double>(flips_) / static_cast<double>(capacity_);
}

DisorderTracker::DisorderTracker(std::size_t window, std::span<const std::string> ids) : window_(window) {
    if (window == 0) throw ConfigError("disorder window length must be positive");
    for (const auto& id : ids)
        if (!windows_.emplace(id, SignWindow(window)).second) throw ContractError("duplicate scale id '" + id + "'");
}

void DisorderTracker::record(const std::string& id, double gradient) {
    auto it = windows_.find(id);
    if (it == windows_.end()) throw ContractError("scale '" + id + "' is not registered with the disorder tracker");
    it->second.push(sign_of(gradient));
}

std::optional<double> DisorderTracker::disorder(const std::string& id) const { return window(id).disorder(); }

bool DisorderTracker::ready() const {
    for (const auto& [_, w] : windows_)
        if (!w.full()) return false;
    return true;
}

const SignWindow& DisorderTracker::window(const std::string& id) const {
    auto it = windows_.find(id);
    if (it == windows_.end()) throw ContractError("scale '" + id + "' is not registered with the disorder tracker");
    return it->second;
}

std::vector<std::string> DisorderTracker::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : windows_) out.push_back(id);
    return out;
}

double disorder_of(std::span<const double> gradients) {
    if (gradients.empty()) throw InputError("disorder_of: empty gradient sequence");
    std::size_t count = 0;
    for (std::size_t j = 0; j + 1 < gradients.size(); ++j)
        if (is_flip(sign_of(gradients[j]), sign_of(gradients[j + 1]))) ++count;
    return static_cast<double>(count) / static_cast<double>(gradients.size());
}

}  // namespace gaqat
