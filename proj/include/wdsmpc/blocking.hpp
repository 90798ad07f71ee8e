#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "wdsmpc/common.hpp"

namespace wdsmpc {

/// Move-blocking layout over a prediction horizon: Nc blocks whose lengths
/// sum to Np. Start positions are 1-based and always derived from the
/// lengths by cumulative sum, never user-supplied.
struct BlockingSchedule {
    int np = 0;
    int nc = 0;
    std::vector<int> lengths;
    std::vector<int> starts;
};

enum class ExpansionKind { binary, interpolated };

/// Np x Nc map from a reduced input-rate sequence to the full horizon.
///
/// binary:       each row is a unit vector; column i carries lengths[i]
///               consecutive ones, so every reduced value is replicated
///               across its block.
/// interpolated: anchor rows (block starts) are unit vectors; rows between
///               two anchors are the convex combination
///               lambda*e_i + (1-lambda)*e_{i+1} with
///               lambda = 1 - (b - s_i)/(s_{i+1} - s_i);
///               rows past the last anchor hold the last reduced value.
struct ExpansionMatrix {
    ExpansionKind kind = ExpansionKind::binary;
    Mat W;
};

inline BlockingSchedule schedule_from_lengths(const std::vector<int>& lengths, int np) {
    if (lengths.empty()) throw ScheduleError("schedule: block length vector is empty");
    for (int l : lengths)
        if (l < 1) throw ScheduleError("schedule: block lengths must be >= 1, got " + std::to_string(l));
    const int total = std::accumulate(lengths.begin(), lengths.end(), 0);
    if (total != np)
        throw ScheduleError("schedule: lengths sum " + std::to_string(total) +
                            " != Np " + std::to_string(np));

    BlockingSchedule s;
    s.np = np;
    s.nc = static_cast<int>(lengths.size());
    s.lengths = lengths;
    s.starts.resize(lengths.size());
    int pos = 1;
    for (size_t i = 0; i < lengths.size(); ++i) {
        s.starts[i] = pos;
        pos += lengths[i];
    }
    return s;
}

/// Schedule with all block lengths 1: full degrees of freedom (no blocking).
inline BlockingSchedule unblocked_schedule(int np) {
    return schedule_from_lengths(std::vector<int>(static_cast<size_t>(np), 1), np);
}

inline ExpansionMatrix binary_blocking_matrix(const BlockingSchedule& s) {
    ExpansionMatrix m;
    m.kind = ExpansionKind::binary;
    m.W = Mat::Zero(s.np, s.nc);
    for (int i = 0; i < s.nc; ++i) {
        const int first = s.starts[static_cast<size_t>(i)] - 1;
        for (int r = 0; r < s.lengths[static_cast<size_t>(i)]; ++r) m.W(first + r, i) = 1.0;
    }
    return m;
}

inline ExpansionMatrix interpolation_matrix(const BlockingSchedule& s) {
    ExpansionMatrix m;
    m.kind = ExpansionKind::interpolated;
    m.W = Mat::Zero(s.np, s.nc);
    int block = 0;  // index of the last anchor at or before the current row
    for (int pos = 1; pos <= s.np; ++pos) {
        while (block + 1 < s.nc && s.starts[static_cast<size_t>(block + 1)] <= pos) ++block;
        if (pos == s.starts[static_cast<size_t>(block)]) {
            m.W(pos - 1, block) = 1.0;
        } else if (block + 1 < s.nc) {
            const int si = s.starts[static_cast<size_t>(block)];
            const int sn = s.starts[static_cast<size_t>(block + 1)];
            const double lambda = 1.0 - static_cast<double>(pos - si) / static_cast<double>(sn - si);
            m.W(pos - 1, block) = lambda;
            m.W(pos - 1, block + 1) = 1.0 - lambda;
        } else {
            m.W(pos - 1, block) = 1.0;  // past the last anchor: hold
        }
    }
    return m;
}

/// Expands a reduced sequence (one column per block, n_u x Nc) to the full
/// horizon (n_u x Np), channel by channel: full = reduced * W^T.
inline Mat expand(const ExpansionMatrix& m, const Mat& reduced) {
    if (reduced.cols() != m.W.cols())
        throw DimensionError("expand: reduced sequence has " + std::to_string(reduced.cols()) +
                             " blocks, matrix expects " + std::to_string(m.W.cols()));
    return reduced * m.W.transpose();
}

} // namespace wdsmpc
