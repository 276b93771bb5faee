#include "cmdp/interval.hpp"

#include <algorithm>
#include <stdexcept>

namespace cmdp {

namespace {
struct Tmp {
    mpfr_t v;
    Tmp() { mpfr_init2(v, Iv::kPrec); }
    ~Tmp() { mpfr_clear(v); }
};
}  // namespace

Iv operator*(const Iv& a, const Iv& b) {
    // General sign handling: min/max over the four corner products with
    // directed rounding on each side.
    Iv r;
    Tmp p;
    const mpfr_srcptr as[2] = {a.lo_, a.hi_};
    const mpfr_srcptr bs[2] = {b.lo_, b.hi_};
    bool first = true;
    for (auto x : as)
        for (auto y : bs) {
            mpfr_mul(p.v, x, y, MPFR_RNDD);
            if (first || mpfr_less_p(p.v, r.lo_)) mpfr_set(r.lo_, p.v, MPFR_RNDD);
            mpfr_mul(p.v, x, y, MPFR_RNDU);
            if (first || mpfr_greater_p(p.v, r.hi_)) mpfr_set(r.hi_, p.v, MPFR_RNDU);
            first = false;
        }
    return r;
}

Iv operator/(const Iv& a, const Iv& b) {
    if (mpfr_sgn(b.lo_) <= 0 && mpfr_sgn(b.hi_) >= 0)
        throw std::domain_error("interval division by interval containing zero");
    Iv r;
    Tmp p;
    const mpfr_srcptr as[2] = {a.lo_, a.hi_};
    const mpfr_srcptr bs[2] = {b.lo_, b.hi_};
    bool first = true;
    for (auto x : as)
        for (auto y : bs) {
            mpfr_div(p.v, x, y, MPFR_RNDD);
            if (first || mpfr_less_p(p.v, r.lo_)) mpfr_set(r.lo_, p.v, MPFR_RNDD);
            mpfr_div(p.v, x, y, MPFR_RNDU);
            if (first || mpfr_greater_p(p.v, r.hi_)) mpfr_set(r.hi_, p.v, MPFR_RNDU);
            first = false;
        }
    return r;
}

Iv log(const Iv& a) {
    if (mpfr_sgn(a.lo_) <= 0) throw std::domain_error("interval log of non-positive value");
    Iv r;
    mpfr_log(r.lo_, a.lo_, MPFR_RNDD);
    mpfr_log(r.hi_, a.hi_, MPFR_RNDU);
    return r;
}

Iv pow(const Iv& base, const Iv& e) { return exp(e * log(base)); }

std::string Iv::str(int digits) const {
    char buf[256];
    mpfr_snprintf(buf, sizeof buf, "[%.*Rg, %.*Rg]", digits, lo_, digits, hi_);
    return buf;
}

}  // namespace cmdp
