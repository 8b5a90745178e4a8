#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace memaudit {

/// Exact unsigned big integer, just large enough for counting candidate
/// spaces (products of hole alphabet sizes). Word-level formats can exceed
/// 2^64 easily, so 64-bit counters are not enough.
class BigCount {
public:
    BigCount() : limbs_{0} {}
    explicit BigCount(std::uint64_t v) {
        limbs_.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
        const auto hi = static_cast<std::uint32_t>(v >> 32);
        if (hi != 0) limbs_.push_back(hi);
    }

    static BigCount one() { return BigCount(1); }

    void mul_u32(std::uint32_t m) {
        std::uint64_t carry = 0;
        for (auto& limb : limbs_) {
            const std::uint64_t prod = static_cast<std::uint64_t>(limb) * m + carry;
            limb = static_cast<std::uint32_t>(prod & 0xffffffffULL);
            carry = prod >> 32;
        }
        while (carry != 0) {
            limbs_.push_back(static_cast<std::uint32_t>(carry & 0xffffffffULL));
            carry >>= 32;
        }
        normalize();
    }

    bool is_zero() const { return limbs_.size() == 1 && limbs_[0] == 0; }

    bool fits_u64() const { return limbs_.size() <= 2; }

    std::uint64_t to_u64() const {
        std::uint64_t v = limbs_[0];
        if (limbs_.size() > 1) v |= static_cast<std::uint64_t>(limbs_[1]) << 32;
        return v;
    }

    /// log2 of the value, accurate to ~1 ulp of double. Zero maps to -inf.
    double log2() const {
        if (is_zero()) return -std::numeric_limits<double>::infinity();
        const std::size_t top = limbs_.size() - 1;
        double mantissa = static_cast<double>(limbs_[top]);
        if (top >= 1) mantissa = mantissa * 4294967296.0 + static_cast<double>(limbs_[top - 1]);
        if (top >= 2) mantissa = mantissa * 4294967296.0 + static_cast<double>(limbs_[top - 2]);
        const std::size_t skipped = (top >= 2) ? top - 2 : 0;
        return std::log2(mantissa) + 32.0 * static_cast<double>(skipped);
    }

    std::string to_string() const {
        std::vector<std::uint32_t> work = limbs_;
        std::string out;
        while (!(work.size() == 1 && work[0] == 0)) {
            std::uint64_t rem = 0;
            for (std::size_t i = work.size(); i-- > 0;) {
                const std::uint64_t cur = (rem << 32) | work[i];
                work[i] = static_cast<std::uint32_t>(cur / 1000000000ULL);
                rem = cur % 1000000000ULL;
            }
            while (work.size() > 1 && work.back() == 0) work.pop_back();
            std::string chunk = std::to_string(rem);
            if (!(work.size() == 1 && work[0] == 0)) {
                chunk = std::string(9 - chunk.size(), '0') + chunk;
            }
            out = chunk + out;
        }
        return out.empty() ? "0" : out;
    }

    friend bool operator==(const BigCount& a, const BigCount& b) { return a.limbs_ == b.limbs_; }
    friend bool operator<(const BigCount& a, const BigCount& b) {
        if (a.limbs_.size() != b.limbs_.size()) return a.limbs_.size() < b.limbs_.size();
        for (std::size_t i = a.limbs_.size(); i-- > 0;) {
            if (a.limbs_[i] != b.limbs_[i]) return a.limbs_[i] < b.limbs_[i];
        }
        return false;
    }
    friend bool operator<=(const BigCount& a, const BigCount& b) { return a < b || a == b; }

private:
    void normalize() {
        while (limbs_.size() > 1 && limbs_.back() == 0) limbs_.pop_back();
    }

    std::vector<std::uint32_t> limbs_; // little-endian base 2^32
};

} // namespace memaudit
