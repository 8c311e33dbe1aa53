#pragma once

// Adaptive ensembling factor: a cosine-annealed proportion of the zero-shot
// weights, scaled by 1/gamma and by the relative train / zero-shot loss.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "signtune/error.hpp"

namespace signtune {

struct AdaptiveFactorConfig {
    double gamma = 5.0;
    int total_epochs = 10;
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;

    void validate() const {
        if (!(gamma > 0.0) || !std::isfinite(gamma)) throw RangeError("adaptive factor: gamma must be positive");
        if (total_epochs < 1) throw RangeError("adaptive factor: total epochs must be >= 1");
        if (!(0.0 <= clamp_lo && clamp_lo <= clamp_hi && clamp_hi <= 1.0)) {
            throw RangeError("adaptive factor: clamp interval must satisfy 0 <= lo <= hi <= 1");
        }
    }
};

struct FactorValue {
    double beta_raw;
    double beta;
};

/// (1 + cos(pi t / 2T)) / 2, falling from 1 at t = 0 to 0.5 at t = T.
inline double cosine_term(int t, int total_epochs) {
    if (total_epochs < 1) throw RangeError("cosine term: total epochs must be >= 1");
    if (t < 0 || t > total_epochs) {
        throw RangeError("cosine term: epoch " + std::to_string(t) + " outside [0, " + std::to_string(total_epochs) + "]");
    }
    return (1.0 + std::cos(std::numbers::pi * t / (2.0 * total_epochs))) / 2.0;
}

inline FactorValue adaptive_factor(int t, const AdaptiveFactorConfig& cfg, double train_loss, double zero_shot_loss) {
    cfg.validate();
    if (!std::isfinite(train_loss) || !std::isfinite(zero_shot_loss)) {
        throw ValidityError("adaptive factor: non-finite loss");
    }
    if (train_loss < 0.0) throw ValidityError("adaptive factor: negative training loss");
    if (!(zero_shot_loss > 0.0)) throw DivisionGuardError("adaptive factor: zero-shot loss must be positive");
    const double raw = cosine_term(t, cfg.total_epochs) / cfg.gamma * ((train_loss + zero_shot_loss) / zero_shot_loss);
    return {raw, std::clamp(raw, cfg.clamp_lo, cfg.clamp_hi)};
}

struct FactorRow {
    int epoch;
    double train_loss;
    double zero_shot_loss;
    double beta_raw;
    double beta;
};

/// Per-epoch record of the schedule; append-only.
class FactorTrace {
public:
    void append(const FactorRow& row) {
        const int expected = rows_.empty() ? 0 : rows_.back().epoch + 1;
        if (row.epoch != expected) {
            throw DataError("factor trace: expected epoch " + std::to_string(expected) + ", got " +
                            std::to_string(row.epoch));
        }
        if (!(row.zero_shot_loss > 0.0)) throw DivisionGuardError("factor trace: zero-shot loss must be positive");
        rows_.push_back(row);
    }

    const std::vector<FactorRow>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

    std::vector<double> betas() const {
        std::vector<double> out;
        for (const auto& r : rows_) out.push_back(r.beta);
        return out;
    }

    void write_csv(std::ostream& os) const {
        os << "epoch,L_train,L_zero_shot,beta_raw,beta\n";
        os.precision(17);
        for (const auto& r : rows_) {
            os << r.epoch << ',' << r.train_loss << ',' << r.zero_shot_loss << ',' << r.beta_raw << ',' << r.beta << '\n';
        }
    }

    std::string csv() const {
        std::ostringstream os;
        write_csv(os);
        return os.str();
    }

private:
    std::vector<FactorRow> rows_;
};

}  // namespace signtune
