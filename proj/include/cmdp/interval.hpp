#pragma once

#include <mpfr.h>

#include <string>

#include "cmdp/rational.hpp"

namespace cmdp {

// Closed real interval [lo, hi] with certified outward rounding (MPFR, default
// 256-bit). Every operation returns an enclosure of the exact image, so any
// comparison decided through certainly_* is rigorous.
class Iv {
  public:
    static constexpr mpfr_prec_t kPrec = 256;

    Iv() { init(); set_zero(); }
    Iv(const Rat& r) {
        init();
        mpfr_set_q(lo_, r.get_mpq_t(), MPFR_RNDD);
        mpfr_set_q(hi_, r.get_mpq_t(), MPFR_RNDU);
    }
    Iv(long v) { init(); mpfr_set_si(lo_, v, MPFR_RNDD); mpfr_set_si(hi_, v, MPFR_RNDU); }
    Iv(const Iv& o) { init(); mpfr_set(lo_, o.lo_, MPFR_RNDD); mpfr_set(hi_, o.hi_, MPFR_RNDU); }
    Iv(Iv&& o) noexcept : owns_(o.owns_) {
        lo_[0] = o.lo_[0];
        hi_[0] = o.hi_[0];
        o.owns_ = false;
    }
    Iv& operator=(Iv o) { swap(o); return *this; }
    ~Iv() {
        if (owns_) { mpfr_clear(lo_); mpfr_clear(hi_); }
    }

    static Iv bounds(const Iv& lower, const Iv& upper) {  // hull from certified ends
        Iv r;
        mpfr_set(r.lo_, lower.lo_, MPFR_RNDD);
        mpfr_set(r.hi_, upper.hi_, MPFR_RNDU);
        return r;
    }
    static Iv pi() {
        Iv r;
        mpfr_const_pi(r.lo_, MPFR_RNDD);
        mpfr_const_pi(r.hi_, MPFR_RNDU);
        return r;
    }

    friend Iv operator+(const Iv& a, const Iv& b) {
        Iv r;
        mpfr_add(r.lo_, a.lo_, b.lo_, MPFR_RNDD);
        mpfr_add(r.hi_, a.hi_, b.hi_, MPFR_RNDU);
        return r;
    }
    friend Iv operator-(const Iv& a, const Iv& b) {
        Iv r;
        mpfr_sub(r.lo_, a.lo_, b.hi_, MPFR_RNDD);
        mpfr_sub(r.hi_, a.hi_, b.lo_, MPFR_RNDU);
        return r;
    }
    friend Iv operator-(const Iv& a) {
        Iv r;
        mpfr_neg(r.lo_, a.hi_, MPFR_RNDD);
        mpfr_neg(r.hi_, a.lo_, MPFR_RNDU);
        return r;
    }
    friend Iv operator*(const Iv& a, const Iv& b);
    friend Iv operator/(const Iv& a, const Iv& b);

    Iv& operator+=(const Iv& o) { *this = *this + o; return *this; }
    Iv& operator-=(const Iv& o) { *this = *this - o; return *this; }
    Iv& operator*=(const Iv& o) { *this = *this * o; return *this; }

    friend Iv exp(const Iv& a) {
        Iv r;
        mpfr_exp(r.lo_, a.lo_, MPFR_RNDD);
        mpfr_exp(r.hi_, a.hi_, MPFR_RNDU);
        return r;
    }
    friend Iv log(const Iv& a);        // requires a.lo > 0
    friend Iv pow(const Iv& base, const Iv& e);  // base > 0, via exp(e*log(base))

    bool certainly_le(const Iv& o) const { return mpfr_lessequal_p(hi_, o.lo_) != 0; }
    bool certainly_lt(const Iv& o) const { return mpfr_less_p(hi_, o.lo_) != 0; }
    bool certainly_ge(const Iv& o) const { return mpfr_greaterequal_p(lo_, o.hi_) != 0; }
    bool certainly_gt(const Iv& o) const { return mpfr_greater_p(lo_, o.hi_) != 0; }
    bool certainly_le(const Rat& r) const { return certainly_le(Iv(r)); }
    bool certainly_ge(const Rat& r) const { return certainly_ge(Iv(r)); }

    double lo_d() const { return mpfr_get_d(lo_, MPFR_RNDD); }
    double hi_d() const { return mpfr_get_d(hi_, MPFR_RNDU); }
    double mid_d() const { return 0.5 * (lo_d() + hi_d()); }
    double width_d() const {
        mpfr_t w;
        mpfr_init2(w, kPrec);
        mpfr_sub(w, hi_, lo_, MPFR_RNDU);
        double d = mpfr_get_d(w, MPFR_RNDU);
        mpfr_clear(w);
        return d;
    }
    bool valid() const { return mpfr_lessequal_p(lo_, hi_) != 0; }
    std::string str(int digits = 17) const;

  private:
    void init() {
        mpfr_init2(lo_, kPrec);
        mpfr_init2(hi_, kPrec);
        owns_ = true;
    }
    void set_zero() { mpfr_set_zero(lo_, 1); mpfr_set_zero(hi_, 1); }
    void swap(Iv& o) {
        mpfr_swap(lo_, o.lo_);
        mpfr_swap(hi_, o.hi_);
        std::swap(owns_, o.owns_);
    }

    mpfr_t lo_, hi_;
    bool owns_ = false;
};

}  // namespace cmdp
