#include "cmdp/model.hpp"

#include <algorithm>

namespace cmdp {

Law::Law(std::vector<LawEntry> entries, bool validate) : entries_(std::move(entries)) {
    if (!validate) return;
    if (entries_.empty()) throw ModelError("law with empty support");
    Rat sum = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.w <= 0) throw ModelError("law weight not strictly positive");
        sum += e.w;
        for (std::size_t j = i + 1; j < entries_.size(); ++j)
            if (entries_[j].edge == e.edge) throw ModelError("duplicate law support entry");
    }
    if (sum != 1) throw ModelError("law weights do not sum to 1 (got " + rat_string(sum) + ")");
}

const LawEntry& Law::sample(std::uint64_t r) const {
    if (entries_.size() == 1) return entries_[0];
    Rat cum = 0;
    for (std::size_t i = 0; i + 1 < entries_.size(); ++i) {
        cum += entries_[i].w;
        // threshold = floor(cum * 2^64)
        mpz_class t;
        mpz_mul_2exp(t.get_mpz_t(), cum.get_num().get_mpz_t(), 64);
        mpz_tdiv_q(t.get_mpz_t(), t.get_mpz_t(), cum.get_den().get_mpz_t());
        if (fits_u64(t) ? (r < to_u64(t)) : true) return entries_[i];
    }
    return entries_.back();
}

Expansion MemoModel::expand(const StateKey& s) const {
    {
        std::shared_lock lk(mu_);
        auto it = memo_.find(s);
        if (it != memo_.end()) return it->second;
    }
    Expansion e = inner_->expand(s);
    std::unique_lock lk(mu_);
    return memo_.emplace(s, std::move(e)).first->second;
}

}  // namespace cmdp
