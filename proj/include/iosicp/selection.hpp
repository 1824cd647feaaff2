#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "iosicp/errors.hpp"
#include "iosicp/grid.hpp"
#include "iosicp/params.hpp"

namespace iosicp {

/// Binary H x W mask of cells likely to contain objects.
struct SparseMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits;  // row-major, each 0 or 1

    int count_ones() const {
        int n = 0;
        for (auto b : bits) n += b;
        return n;
    }
};

/// bits[h,w] = 1 iff the channel-wise max of the grid exceeds the threshold.
inline SparseMap extract_sparse_map(const FeatureGrid& grid, double threshold) {
    if (!std::isfinite(threshold)) throw DomainError("extract_sparse_map: threshold not finite");
    SparseMap m;
    m.height = grid.height;
    m.width = grid.width;
    const int hw = grid.height * grid.width;
    m.bits.assign(hw, 0);
    for (int c = 0; c < grid.channels; ++c) {
        const float* p = grid.data.data() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i)
            if (static_cast<double>(p[i]) > threshold) m.bits[i] = 1;
    }
    return m;
}

inline double occupied_fraction(const SparseMap& m) {
    if (m.bits.empty()) return 0.0;
    return static_cast<double>(m.count_ones()) / static_cast<double>(m.bits.size());
}

/// |m AND ego| / max(1, |ego|); the fixed-size spatial summary the GNN sees.
inline double overlap_with_ego(const SparseMap& m, const SparseMap& ego) {
    if (m.height != ego.height || m.width != ego.width)
        throw ShapeError("overlap_with_ego: map dims differ");
    int both = 0;
    for (std::size_t i = 0; i < m.bits.size(); ++i) both += (m.bits[i] & ego.bits[i]);
    return static_cast<double>(both) / std::max(1, ego.count_ones());
}

/// One node of the selection graph.
struct CollabNode {
    int agent_id = 0;
    SparseMap map;
    double latency_s = 0.0;  // forced to 0 for the ego node
    double occupied_fraction = 0.0;
    double overlap_with_ego = 0.0;
    bool is_ego = false;
};

/// Per-agent scalar weights; sign carries validity (w <= 0 is pruned).
struct EnhancedWeights {
    std::map<int, double> by_agent;
};

// Latency normalization ceiling, beyond the worst latency the harness sweeps.
inline constexpr double kLatencyNormS = 0.5;

/// Star-graph message-passing parameters; state dimension 3, two rounds.
/// Flat layout: Wn (3x6) | bn (3) | We (3x6) | be (3) | r (3) | r0 (1).
struct GnnParams {
    static constexpr int kStateDim = 3;
    static constexpr int kFlatSize = 46;
    std::array<double, 18> w_neighbor{};
    std::array<double, 3> b_neighbor{};
    std::array<double, 18> w_ego{};
    std::array<double, 3> b_ego{};
    std::array<double, 3> readout{};
    double readout_bias = 0.0;

    static GnnParams from_flat(std::span<const double> flat) {
        if (flat.size() != kFlatSize) throw ConfigError("gnn params: expected 46 values");
        GnnParams p;
        std::size_t k = 0;
        for (auto& v : p.w_neighbor) v = flat[k++];
        for (auto& v : p.b_neighbor) v = flat[k++];
        for (auto& v : p.w_ego) v = flat[k++];
        for (auto& v : p.b_ego) v = flat[k++];
        for (auto& v : p.readout) v = flat[k++];
        p.readout_bias = flat[k++];
        return p;
    }

    std::vector<double> to_flat() const {
        std::vector<double> flat;
        flat.reserve(kFlatSize);
        flat.insert(flat.end(), w_neighbor.begin(), w_neighbor.end());
        flat.insert(flat.end(), b_neighbor.begin(), b_neighbor.end());
        flat.insert(flat.end(), w_ego.begin(), w_ego.end());
        flat.insert(flat.end(), b_ego.begin(), b_ego.end());
        flat.insert(flat.end(), readout.begin(), readout.end());
        flat.push_back(readout_bias);
        return flat;
    }
};

/// Shipped default: identity-through-tanh state updates with a readout tuned
/// so fresh, overlapping collaborators come out positive and collaborators
/// beyond 4 perception cycles with zero ego overlap come out negative.
inline GnnParams gnn_default_params() {
    GnnParams p;
    for (int i = 0; i < 3; ++i) {
        p.w_neighbor[i * 6 + i] = 1.0;
        p.w_ego[i * 6 + i] = 1.0;
    }
    p.readout = {0.4, -3.0, 5.0};
    p.readout_bias = 1.0;
    return p;
}

/// Published hand-steppable set used by the reference forward-pass test.
inline GnnParams gnn_test_params() {
    GnnParams p;
    for (int i = 0; i < 3; ++i) {
        p.w_neighbor[i * 6 + i] = 0.5;
        p.w_neighbor[i * 6 + 3 + i] = 0.25;
        p.w_ego[i * 6 + i] = 0.5;
        p.w_ego[i * 6 + 3 + i] = 0.25;
    }
    p.b_neighbor = {0.1, -0.1, 0.0};
    p.readout = {1.0, -1.0, 1.0};
    p.readout_bias = 0.05;
    return p;
}

inline ParamSet builtin_gnn_params() {
    return ParamSet{{"gnn.default", gnn_default_params().to_flat()},
                    {"gnn.test", gnn_test_params().to_flat()}};
}

namespace detail {

using State = std::array<double, 3>;

inline State affine_tanh(const std::array<double, 18>& w, const std::array<double, 3>& b,
                         const State& own, const State& other) {
    State out{};
    for (int i = 0; i < 3; ++i) {
        double z = b[i];
        for (int j = 0; j < 3; ++j) z += w[i * 6 + j] * own[j] + w[i * 6 + 3 + j] * other[j];
        out[i] = std::tanh(z);
    }
    return out;
}

}  // namespace detail

/// Two rounds of star-graph message passing over ego + neighbors. Node
/// features are [occupied_fraction, min(latency / kLatencyNormS, 1),
/// overlap_with_ego]; neighbors update from (own, ego), the ego updates from
/// (own, mean of new neighbor states), readout is an affine map per neighbor.
/// Deterministic: neighbors are processed in ascending agent id.
inline EnhancedWeights gnn_enhanced_weights(const std::vector<CollabNode>& nodes,
                                            const GnnParams& params) {
    int ego_count = 0;
    for (const auto& n : nodes) ego_count += n.is_ego ? 1 : 0;
    if (ego_count != 1) throw GraphError("gnn_enhanced_weights: need exactly one ego node");

    detail::State ego_state{};
    std::vector<std::pair<int, detail::State>> neighbors;
    neighbors.reserve(nodes.size());
    for (const auto& n : nodes) {
        if (!std::isfinite(n.occupied_fraction) || !std::isfinite(n.latency_s) ||
            !std::isfinite(n.overlap_with_ego))
            throw GraphError("gnn_enhanced_weights: non-finite node feature");
        const double tau = n.is_ego ? 0.0 : n.latency_s;  // ego is never stale
        const detail::State s{n.occupied_fraction, std::min(tau / kLatencyNormS, 1.0),
                              n.overlap_with_ego};
        if (n.is_ego)
            ego_state = s;
        else
            neighbors.emplace_back(n.agent_id, s);
    }
    std::sort(neighbors.begin(), neighbors.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    for (int round = 0; round < 2; ++round) {
        for (auto& [id, s] : neighbors) s = detail::affine_tanh(params.w_neighbor,
                                                                params.b_neighbor, s, ego_state);
        detail::State mean{};
        if (!neighbors.empty()) {
            for (const auto& [id, s] : neighbors)
                for (int i = 0; i < 3; ++i) mean[i] += s[i];
            for (int i = 0; i < 3; ++i) mean[i] /= static_cast<double>(neighbors.size());
        }
        ego_state = detail::affine_tanh(params.w_ego, params.b_ego, ego_state, mean);
    }

    EnhancedWeights out;
    for (const auto& [id, s] : neighbors) {
        double w = params.readout_bias;
        for (int i = 0; i < 3; ++i) w += params.readout[i] * s[i];
        out.by_agent[id] = w;
    }
    return out;
}

/// Agents with strictly positive enhanced weight, ascending id.
inline std::vector<int> select_collaborators(const EnhancedWeights& weights) {
    std::vector<int> out;
    for (const auto& [id, w] : weights.by_agent)
        if (w > 0.0) out.push_back(id);
    return out;
}

}  // namespace iosicp
