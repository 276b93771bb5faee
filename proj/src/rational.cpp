#include "cmdp/rational.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <mpfr.h>

namespace cmdp {

std::string rat_string(const Rat& r) {
    if (r.get_den() == 1) return r.get_num().get_str();
    return r.get_num().get_str() + "/" + r.get_den().get_str();
}

std::string rat_decimal(const Rat& r, int significant) {
    // Round-to-nearest decimal rendering with a fixed number of significant digits,
    // done in MPFR so huge numerators cannot lose digits on the way through a double.
    mpfr_t x;
    mpfr_init2(x, 256);
    mpfr_set_q(x, r.get_mpq_t(), MPFR_RNDN);
    char buf[128];
    mpfr_snprintf(buf, sizeof buf, "%.*Rg", significant, x);
    mpfr_clear(x);
    return buf;
}

std::string rat_report(const Rat& r) {
    return rat_string(r) + " (~" + rat_decimal(r) + ")";
}

Rat parse_rat(const std::string& s) {
    std::string t;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) t += c;
    if (t.empty()) throw std::invalid_argument("empty rational literal");
    Rat r;
    if (r.set_str(t, 10) != 0) throw std::invalid_argument("bad rational literal: " + s);
    if (r.get_den() == 0) throw std::invalid_argument("zero denominator: " + s);
    r.canonicalize();
    return r;
}

}  // namespace cmdp
