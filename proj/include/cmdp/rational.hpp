#pragma once

#include <cstdint>
#include <gmpxx.h>
#include <stdexcept>
#include <string>

namespace cmdp {

// Exact rational number. Canonical (reduced, positive denominator) at all times.
using Rat = mpq_class;

inline Rat rat(long num, long den = 1) {
    if (den == 0) throw std::invalid_argument("rational with zero denominator");
    Rat r(num, den);
    r.canonicalize();
    return r;
}

inline Rat rat_pow(const Rat& base, unsigned long e) {
    Rat out;
    mpz_pow_ui(out.get_num_mpz_t(), base.get_num_mpz_t(), e);
    mpz_pow_ui(out.get_den_mpz_t(), base.get_den_mpz_t(), e);
    return out;  // base canonical => power canonical
}

// 2^-i and 3^-i with arbitrary i >= 0.
inline Rat pow2_neg(unsigned long i) {
    Rat r;
    r = 1;
    mpz_mul_2exp(r.get_den_mpz_t(), r.get_den_mpz_t(), i);
    return r;
}

inline Rat pow_neg(unsigned long base, unsigned long i) {
    Rat r;
    mpz_ui_pow_ui(r.get_den_mpz_t(), base, i);
    mpz_set_ui(r.get_num_mpz_t(), 1);
    return r;
}

inline bool fits_u64(const mpz_class& z) {
    return z.fits_ulong_p() || mpz_sizeinbase(z.get_mpz_t(), 2) <= 64;
}

inline std::uint64_t to_u64(const mpz_class& z) {
    // low 64 bits; caller checks fits_u64
    std::uint64_t lo = mpz_getlimbn(z.get_mpz_t(), 0);
    if (mpz_size(z.get_mpz_t()) == 0) return 0;
    return lo;
}

std::string rat_string(const Rat& r);          // "num/den" ("num" when den == 1)
std::string rat_decimal(const Rat& r, int significant = 12);
std::string rat_report(const Rat& r);          // "num/den (~decimal)"
Rat parse_rat(const std::string& s);           // accepts "a/b" or integer

}  // namespace cmdp
