#include "topohazard/filtration.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace topohazard {

std::int64_t BirthProcess::at_risk_left(double t) const {
    auto it = std::lower_bound(exit_levels.begin(), exit_levels.end(), t);
    return static_cast<std::int64_t>(exit_levels.end() - it);
}

std::vector<std::pair<GridIndex, double>> local_minima(const LatticeField& field) {
    std::vector<std::pair<GridIndex, double>> out;
    for (int r = 0; r < field.nrows(); ++r)
        for (int c = 0; c < field.ncols(); ++c) {
            const double v = field.value(r, c);
            bool is_min = true;
            for (const GridIndex& nb : field.neighbors({r, c}))
                if (field.value(nb) < v) {
                    is_min = false;
                    break;
                }
            if (is_min) out.push_back({{r, c}, v});
        }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    return out;
}

BirthProcess birth_process(const LatticeField& field, Direction direction) {
    if (direction == Direction::superlevel) {
        BirthProcess bp = birth_process(field.negated(), Direction::sublevel);
        bp.direction = Direction::superlevel;
        return bp;
    }

    const int n = field.size();
    BirthProcess bp;
    bp.direction = Direction::sublevel;
    bp.n_cells = n;

    // Exit level of a cell: min over its closed neighborhood. A cell is at
    // risk just before t iff its exit level is >= t.
    std::vector<double> exit(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const GridIndex ix = field.unflat(i);
        double m = field.value_flat(i);
        double own = m;
        double min_nb = std::numeric_limits<double>::infinity();
        for (const GridIndex& nb : field.neighbors(ix)) min_nb = std::min(min_nb, field.value(nb));
        m = std::min(own, min_nb);
        exit[static_cast<std::size_t>(i)] = m;
        if (own < min_nb) bp.births.push_back({own, ix, 0, 0});
    }
    std::sort(bp.births.begin(), bp.births.end(),
              [](const BirthEvent& a, const BirthEvent& b) { return a.level < b.level; });

    bp.exit_levels = exit;
    std::sort(bp.exit_levels.begin(), bp.exit_levels.end());

    for (BirthEvent& ev : bp.births) {
        ev.at_risk_left = bp.at_risk_left(ev.level);
        // Under strict inequalities at u, neighbors of the birthing cell drop
        // out: their smallest neighbor value is exactly u. Those are the only
        // cells whose indicator differs from the left limit.
        std::int64_t deficit = 0;
        for (const GridIndex& nb : field.neighbors(ev.location))
            if (exit[static_cast<std::size_t>(field.flat(nb.row, nb.col))] == ev.level)
                ++deficit;
        ev.at_risk_strict = ev.at_risk_left - deficit;
    }
    return bp;
}

std::int64_t Barcode::alive_at(double t) const {
    std::int64_t count = 0;
    for (const auto& iv : intervals)
        if (iv.birth <= t && t < iv.death) ++count;
    return count;
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    std::vector<int> rank_;
    explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)), rank_(static_cast<std::size_t>(n), 0) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int x) {
        int root = x;
        while (parent[static_cast<std::size_t>(root)] != root) root = parent[static_cast<std::size_t>(root)];
        while (parent[static_cast<std::size_t>(x)] != root) {
            int next = parent[static_cast<std::size_t>(x)];
            parent[static_cast<std::size_t>(x)] = root;
            x = next;
        }
        return root;
    }
    int unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return a;
        if (rank_[static_cast<std::size_t>(a)] < rank_[static_cast<std::size_t>(b)]) std::swap(a, b);
        parent[static_cast<std::size_t>(b)] = a;
        if (rank_[static_cast<std::size_t>(a)] == rank_[static_cast<std::size_t>(b)]) ++rank_[static_cast<std::size_t>(a)];
        return a;
    }
};

}  // namespace

Barcode barcode(const LatticeField& field) {
    const int n = field.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return field.value_flat(a) < field.value_flat(b); });

    Barcode bc;
    UnionFind uf(n);
    std::vector<int> interval_of(static_cast<std::size_t>(n), -1);  // root cell -> interval index
    std::vector<std::uint8_t> added(static_cast<std::size_t>(n), 0);

    for (int cell : order) {
        const double level = field.value_flat(cell);
        const GridIndex ix = field.unflat(cell);

        // Distinct components among already-added neighbors.
        int roots[8];
        int nroots = 0;
        for (const GridIndex& nb : field.neighbors(ix)) {
            const int j = field.flat(nb.row, nb.col);
            if (!added[static_cast<std::size_t>(j)]) continue;
            const int root = uf.find(j);
            bool seen = false;
            for (int k = 0; k < nroots; ++k)
                if (roots[k] == root) seen = true;
            if (!seen) roots[nroots++] = root;
        }
        added[static_cast<std::size_t>(cell)] = 1;

        if (nroots == 0) {
            interval_of[static_cast<std::size_t>(cell)] =
                static_cast<int>(bc.intervals.size());
            bc.intervals.push_back(
                {level, std::numeric_limits<double>::infinity(), ix});
            continue;
        }

        // Elder rule: the oldest joined component survives; every younger one
        // dies at this level.
        int eldest = roots[0];
        for (int k = 1; k < nroots; ++k) {
            const auto birth = [&](int r) {
                return bc.intervals[static_cast<std::size_t>(
                                        interval_of[static_cast<std::size_t>(r)])]
                    .birth;
            };
            if (birth(roots[k]) < birth(eldest)) eldest = roots[k];
        }
        const int eldest_interval = interval_of[static_cast<std::size_t>(eldest)];
        for (int k = 0; k < nroots; ++k) {
            if (roots[k] == eldest) continue;
            bc.intervals[static_cast<std::size_t>(
                             interval_of[static_cast<std::size_t>(roots[k])])]
                .death = level;
        }
        int merged = uf.unite(eldest, cell);
        for (int k = 0; k < nroots; ++k) merged = uf.unite(merged, roots[k]);
        interval_of[static_cast<std::size_t>(merged)] = eldest_interval;
    }
    return bc;
}

}  // namespace topohazard
