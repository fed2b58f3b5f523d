#include "topohazard/trees.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "topohazard/csv.hpp"

namespace topohazard {

namespace {

using Vec3 = std::array<double, 3>;

double norm(const Vec3& v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

Vec3 sub(const Vec3& a, const Vec3& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

double polyline_length(const std::vector<Vec3>& pts) {
    double len = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) len += norm(sub(pts[i], pts[i - 1]));
    return len;
}

std::string edge_id_of(const TreeEdge& e) { return e.parent + "->" + e.child; }

/// Min distance from point c to the segment [a, b].
double segment_min_distance(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 d = sub(b, a);
    const double dd = dot(d, d);
    double t = 0.0;
    if (dd > 0.0) t = std::clamp(-dot(sub(a, c), d) / dd, 0.0, 1.0);
    const Vec3 p{a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]};
    return norm(sub(p, c));
}

}  // namespace

std::string to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::root: return "root";
        case NodeKind::branch: return "branch";
        case NodeKind::leaf: return "leaf";
        case NodeKind::censored: return "censored";
        case NodeKind::pass_through: return "pass-through";
    }
    return "?";
}

std::string to_string(EventStatus status) {
    switch (status) {
        case EventStatus::leaf: return "leaf";
        case EventStatus::branch: return "branch";
        case EventStatus::censored: return "censored";
    }
    return "?";
}

EventStatus event_status_from_string(const std::string& s) {
    if (s == "leaf") return EventStatus::leaf;
    if (s == "branch") return EventStatus::branch;
    if (s == "censored") return EventStatus::censored;
    throw std::runtime_error("unknown event status '" + s + "'");
}

static NodeKind node_kind_from_string(const std::string& s) {
    if (s == "root") return NodeKind::root;
    if (s == "branch") return NodeKind::branch;
    if (s == "leaf") return NodeKind::leaf;
    if (s == "censored") return NodeKind::censored;
    if (s == "pass-through" || s == "pass_through") return NodeKind::pass_through;
    throw std::runtime_error("unknown node kind '" + s + "'");
}

const TreeNode& MetricTree::node(const std::string& id) const {
    for (const TreeNode& n : nodes)
        if (n.id == id) return n;
    throw std::runtime_error("tree '" + tree_id + "': unknown node '" + id + "'");
}

const TreeNode& MetricTree::root() const {
    for (const TreeNode& n : nodes)
        if (n.kind == NodeKind::root) return n;
    throw std::runtime_error("tree '" + tree_id + "': no root node");
}

void MetricTree::validate() const {
    int roots = 0;
    std::map<std::string, const TreeNode*> by_id;
    for (const TreeNode& n : nodes) {
        if (!by_id.emplace(n.id, &n).second)
            throw std::runtime_error("tree '" + tree_id + "': duplicate node id '" + n.id + "'");
        if (n.kind == NodeKind::root) ++roots;
    }
    if (roots != 1)
        throw std::runtime_error("tree '" + tree_id + "': expected exactly one root, found " +
                                 std::to_string(roots));

    std::map<std::string, int> in_degree;
    std::map<std::string, std::vector<std::string>> children;
    for (const TreeEdge& e : edges) {
        if (!by_id.count(e.parent) || !by_id.count(e.child))
            throw std::runtime_error("tree '" + tree_id + "': edge " + edge_id_of(e) +
                                     " references a missing node");
        if (!(e.width > 0.0))
            throw std::runtime_error("tree '" + tree_id + "': edge " + edge_id_of(e) +
                                     " has non-positive width");
        ++in_degree[e.child];
        children[e.parent].push_back(e.child);

        if (e.polyline.size() < 2)
            throw std::runtime_error("tree '" + tree_id + "': edge " + edge_id_of(e) +
                                     " has a degenerate polyline");
        const Vec3& pc = by_id.at(e.parent)->coords;
        const Vec3& cc = by_id.at(e.child)->coords;
        auto close = [](const Vec3& a, const Vec3& b) {
            const double scale = 1.0 + std::max(norm(a), norm(b));
            return norm(sub(a, b)) <= 1e-9 * scale;
        };
        if (!close(e.polyline.front(), pc) || !close(e.polyline.back(), cc))
            throw std::runtime_error("tree '" + tree_id + "': polyline of " + edge_id_of(e) +
                                     " does not join its endpoint nodes");
    }
    for (const TreeNode& n : nodes) {
        const int deg = in_degree.count(n.id) ? in_degree.at(n.id) : 0;
        if (n.kind == NodeKind::root && deg != 0)
            throw std::runtime_error("tree '" + tree_id + "': root has a parent edge");
        if (n.kind != NodeKind::root && deg != 1)
            throw std::runtime_error("tree '" + tree_id + "': node '" + n.id + "' has " +
                                     std::to_string(deg) + " parent edges");
        const std::size_t nkids =
            children.count(n.id) ? children.at(n.id).size() : 0;
        if ((n.kind == NodeKind::censored || n.kind == NodeKind::leaf) && nkids != 0)
            throw std::runtime_error("tree '" + tree_id + "': " + to_string(n.kind) +
                                     " node '" + n.id + "' has children");
    }

    // in-degree 1 everywhere except the root plus full reachability = a tree.
    std::set<std::string> seen;
    std::vector<std::string> stack{root().id};
    while (!stack.empty()) {
        std::string id = stack.back();
        stack.pop_back();
        if (!seen.insert(id).second) continue;
        if (children.count(id))
            for (const std::string& c : children.at(id)) stack.push_back(c);
    }
    if (seen.size() != nodes.size())
        throw std::runtime_error("tree '" + tree_id + "': " +
                                 std::to_string(nodes.size() - seen.size()) +
                                 " nodes unreachable from the root");
}

MetricTree MetricTree::contracted() const {
    MetricTree t = *this;
    for (;;) {
        std::map<std::string, std::vector<std::size_t>> out_edges;
        std::map<std::string, std::size_t> in_edge;
        for (std::size_t i = 0; i < t.edges.size(); ++i) {
            out_edges[t.edges[i].parent].push_back(i);
            in_edge[t.edges[i].child] = i;
        }
        std::size_t victim = t.nodes.size();
        for (std::size_t i = 0; i < t.nodes.size(); ++i) {
            if (t.nodes[i].kind != NodeKind::pass_through) continue;
            const auto kids = out_edges.count(t.nodes[i].id)
                                  ? out_edges.at(t.nodes[i].id).size()
                                  : 0;
            if (kids != 1)
                throw std::runtime_error("tree '" + tree_id + "': pass-through node '" +
                                         t.nodes[i].id + "' has " + std::to_string(kids) +
                                         " children, expected 1");
            victim = i;
            break;
        }
        if (victim == t.nodes.size()) return t;

        const std::string vid = t.nodes[victim].id;
        const std::size_t up = in_edge.at(vid);
        const std::size_t down = out_edges.at(vid).front();
        TreeEdge merged;
        merged.parent = t.edges[up].parent;
        merged.child = t.edges[down].child;
        const double len_up = polyline_length(t.edges[up].polyline);
        const double len_down = polyline_length(t.edges[down].polyline);
        const double total = len_up + len_down;
        merged.width = total > 0.0 ? (t.edges[up].width * len_up +
                                      t.edges[down].width * len_down) / total
                                   : 0.5 * (t.edges[up].width + t.edges[down].width);
        merged.polyline = t.edges[up].polyline;
        merged.polyline.insert(merged.polyline.end(),
                               t.edges[down].polyline.begin() + 1,
                               t.edges[down].polyline.end());

        std::vector<TreeEdge> edges;
        for (std::size_t i = 0; i < t.edges.size(); ++i)
            if (i != up && i != down) edges.push_back(t.edges[i]);
        edges.push_back(std::move(merged));
        t.edges = std::move(edges);
        t.nodes.erase(t.nodes.begin() + static_cast<std::ptrdiff_t>(victim));
    }
}

namespace {

Vec3 coords_from_json(const nlohmann::json& j, int& dim) {
    Vec3 c{0.0, 0.0, 0.0};
    if (j.is_array()) {
        if (j.size() != 2 && j.size() != 3)
            throw std::runtime_error("coordinate arrays must have 2 or 3 entries");
        for (std::size_t i = 0; i < j.size(); ++i) c[i] = j[i].get<double>();
        dim = std::max(dim, static_cast<int>(j.size()));
        return c;
    }
    c[0] = j.at("x").get<double>();
    c[1] = j.at("y").get<double>();
    if (j.contains("z")) {
        c[2] = j.at("z").get<double>();
        dim = std::max(dim, 3);
    }
    return c;
}

MetricTree tree_from_json(const nlohmann::json& j) {
    MetricTree t;
    t.dim = 2;
    if (j.contains("tree_id")) {
        const auto& id = j.at("tree_id");
        t.tree_id = id.is_string() ? id.get<std::string>() : id.dump();
    }
    for (const auto& nj : j.at("nodes")) {
        TreeNode n;
        const auto& id = nj.at("id");
        n.id = id.is_string() ? id.get<std::string>() : id.dump();
        n.coords = coords_from_json(nj, t.dim);
        n.kind = node_kind_from_string(nj.at("kind").get<std::string>());
        t.nodes.push_back(std::move(n));
    }
    for (const auto& ej : j.at("edges")) {
        TreeEdge e;
        const auto& p = ej.at("parent");
        const auto& c = ej.at("child");
        e.parent = p.is_string() ? p.get<std::string>() : p.dump();
        e.child = c.is_string() ? c.get<std::string>() : c.dump();
        e.width = ej.contains("width") ? ej.at("width").get<double>() : 1.0;
        if (ej.contains("polyline"))
            for (const auto& pt : ej.at("polyline")) {
                int dim = t.dim;
                e.polyline.push_back(coords_from_json(pt, dim));
                t.dim = std::max(t.dim, dim);
            }
        if (e.polyline.empty()) {
            // Straight edge by default.
            e.polyline.push_back(t.node(e.parent).coords);
            e.polyline.push_back(t.node(e.child).coords);
        }
        t.edges.push_back(std::move(e));
    }
    t.validate();
    return t;
}

}  // namespace

std::vector<MetricTree> trees_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("tree JSON parse error: ") + e.what());
    }
    std::vector<MetricTree> trees;
    if (j.is_array())
        for (const auto& tj : j) trees.push_back(tree_from_json(tj));
    else
        trees.push_back(tree_from_json(j));
    return trees;
}

std::vector<MetricTree> trees_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return trees_from_json_text(ss.str());
}

std::string trees_to_json_text(std::span<const MetricTree> trees) {
    nlohmann::json arr = nlohmann::json::array();
    for (const MetricTree& t : trees) {
        nlohmann::json tj;
        tj["tree_id"] = t.tree_id;
        for (const TreeNode& n : t.nodes) {
            nlohmann::json nj{{"id", n.id}, {"x", n.coords[0]}, {"y", n.coords[1]},
                              {"kind", to_string(n.kind)}};
            if (t.dim == 3) nj["z"] = n.coords[2];
            tj["nodes"].push_back(std::move(nj));
        }
        for (const TreeEdge& e : t.edges) {
            nlohmann::json ej{{"parent", e.parent}, {"child", e.child}, {"width", e.width}};
            for (const Vec3& p : e.polyline) {
                nlohmann::json pt = nlohmann::json::array({p[0], p[1]});
                if (t.dim == 3) pt.push_back(p[2]);
                ej["polyline"].push_back(std::move(pt));
            }
            tj["edges"].push_back(std::move(ej));
        }
        arr.push_back(std::move(tj));
    }
    return arr.dump(2);
}

std::vector<std::string> radial_risk_set(const MetricTree& tree, double r) {
    if (!(r > 0.0)) throw std::domain_error("radial_risk_set: radius must be positive");
    const Vec3 center = tree.root().coords;
    std::vector<std::string> out;
    for (const TreeEdge& e : tree.edges) {
        bool hit = false;
        for (std::size_t i = 1; i < e.polyline.size() && !hit; ++i) {
            const Vec3& a = e.polyline[i - 1];
            const Vec3& b = e.polyline[i];
            const double dmin = segment_min_distance(a, b, center);
            const double dmax = std::max(norm(sub(a, center)), norm(sub(b, center)));
            hit = dmin <= r && r <= dmax;
        }
        if (hit) out.push_back(edge_id_of(e));
    }
    return out;
}

std::size_t EventTable::covariate_index(const std::string& name) const {
    for (std::size_t i = 0; i < covariate_names.size(); ++i)
        if (covariate_names[i] == name) return i;
    throw std::out_of_range("unknown covariate '" + name + "'");
}

EventTable build_event_table(std::span<const MetricTree> trees,
                             double proximity_radius) {
    EventTable table;
    table.covariate_names = {"width",        "euclid", "path_ratio", "nodes_within",
                             "order",        "azimuth", "children"};

    std::vector<const MetricTree*> ordered;
    for (const MetricTree& t : trees) ordered.push_back(&t);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const MetricTree* a, const MetricTree* b) {
                         return a->tree_id < b->tree_id;
                     });

    for (const MetricTree* raw : ordered) {
        raw->validate();
        const MetricTree t = raw->contracted();
        const Vec3 root = t.root().coords;

        std::map<std::string, std::vector<const TreeEdge*>> children;
        for (const TreeEdge& e : t.edges) children[e.parent].push_back(&e);
        for (auto& [id, kids] : children)
            std::sort(kids.begin(), kids.end(),
                      [](const TreeEdge* a, const TreeEdge* b) { return a->child < b->child; });
        for (const TreeNode& n : t.nodes) {
            if (n.kind == NodeKind::branch) {
                const std::size_t c = children.count(n.id) ? children.at(n.id).size() : 0;
                if (c < 2)
                    throw std::runtime_error("tree '" + t.tree_id + "': branch node '" +
                                             n.id + "' has " + std::to_string(c) +
                                             " children after contraction");
            }
        }

        // Depth-first from the root so generation order falls out of the walk.
        struct Item {
            const TreeEdge* edge;
            int order;
        };
        std::vector<Item> stack;
        if (children.count(t.root().id)) {
            const auto& kids = children.at(t.root().id);
            for (auto it = kids.rbegin(); it != kids.rend(); ++it)
                stack.push_back({*it, 1});
        }
        while (!stack.empty()) {
            const Item item = stack.back();
            stack.pop_back();
            const TreeEdge& e = *item.edge;
            const TreeNode& parent = t.node(e.parent);
            const TreeNode& child = t.node(e.child);

            if (children.count(child.id)) {
                const auto& kids = children.at(child.id);
                for (auto it = kids.rbegin(); it != kids.rend(); ++it)
                    stack.push_back({*it, item.order + 1});
            }

            EventRow row;
            row.tree_id = t.tree_id;
            row.edge_id = edge_id_of(e);
            row.entry_radius = norm(sub(parent.coords, root));
            row.exit_radius = norm(sub(child.coords, root));
            if (row.exit_radius <= row.entry_radius) {
                table.warnings.push_back("tree '" + t.tree_id + "': edge " + row.edge_id +
                                         " grows inward (exit <= entry); excluded");
                continue;
            }
            switch (child.kind) {
                case NodeKind::leaf: row.status = EventStatus::leaf; break;
                case NodeKind::branch: row.status = EventStatus::branch; break;
                case NodeKind::censored: row.status = EventStatus::censored; break;
                default:
                    throw std::runtime_error("tree '" + t.tree_id + "': edge " +
                                             row.edge_id + " ends in a " +
                                             to_string(child.kind) + " node");
            }

            const double euclid = norm(sub(child.coords, parent.coords));
            const double arclen = polyline_length(e.polyline);
            int nodes_within = 0;
            for (const TreeNode& other : t.nodes)
                if (other.id != child.id &&
                    norm(sub(other.coords, child.coords)) <= proximity_radius)
                    ++nodes_within;
            const Vec3 radial = sub(child.coords, root);
            const double vertical = t.dim == 3 ? radial[2] : radial[1];
            const double rn = norm(radial);
            const double azimuth =
                rn > 0.0 ? std::acos(std::clamp(vertical / rn, -1.0, 1.0)) : 0.0;
            const double n_children =
                children.count(child.id)
                    ? static_cast<double>(children.at(child.id).size())
                    : 0.0;

            row.covariates = {e.width,
                              euclid,
                              euclid > 0.0 ? arclen / euclid : 1.0,
                              static_cast<double>(nodes_within),
                              static_cast<double>(item.order),
                              azimuth,
                              n_children};
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

StepCurve tree_nelson_aalen(const EventTable& table, EventStatus event) {
    if (table.rows.empty())
        throw std::domain_error("tree_nelson_aalen: empty event table");

    std::vector<double> entries, exits;
    entries.reserve(table.rows.size());
    exits.reserve(table.rows.size());
    std::vector<double> event_radii;
    for (const EventRow& row : table.rows) {
        entries.push_back(row.entry_radius);
        exits.push_back(row.exit_radius);
        if (row.status == event) event_radii.push_back(row.exit_radius);
    }
    std::sort(entries.begin(), entries.end());
    std::sort(exits.begin(), exits.end());
    std::sort(event_radii.begin(), event_radii.end());

    auto at_risk = [&](double r) {
        const auto entered =
            std::lower_bound(entries.begin(), entries.end(), r) - entries.begin();
        const auto left = std::lower_bound(exits.begin(), exits.end(), r) - exits.begin();
        return static_cast<std::int64_t>(entered - left);
    };

    StepCurve curve;
    curve.kind = CurveKind::step;
    double total = 0.0;
    for (std::size_t i = 0; i < event_radii.size();) {
        const double r = event_radii[i];
        std::size_t d = 0;
        while (i < event_radii.size() && event_radii[i] == r) {
            ++d;
            ++i;
        }
        const std::int64_t y = at_risk(r);
        if (y <= 0)
            throw std::logic_error("tree_nelson_aalen: empty risk set at an event radius");
        total += static_cast<double>(d) / static_cast<double>(y);
        curve.levels.push_back(r);
        curve.values.push_back(total);
    }
    return curve;
}

void write_event_table_csv(const EventTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "tree_id,edge_id,entry,exit,status";
    for (const std::string& name : table.covariate_names) out << ',' << name;
    out << '\n';
    for (const EventRow& row : table.rows) {
        out << row.tree_id << ',' << row.edge_id << ',' << format_double(row.entry_radius)
            << ',' << format_double(row.exit_radius) << ',' << to_string(row.status);
        for (double v : row.covariates) out << ',' << format_double(v);
        out << '\n';
    }
}

EventTable read_event_table_csv(const std::string& path) {
    const CsvTable csv = read_csv(path, /*expect_header=*/true);
    if (csv.header.size() < 5 || csv.header[0] != "tree_id" || csv.header[1] != "edge_id" ||
        csv.header[2] != "entry" || csv.header[3] != "exit" || csv.header[4] != "status")
        throw std::runtime_error(path + ": expected header tree_id,edge_id,entry,exit,status,...");
    EventTable table;
    table.covariate_names.assign(csv.header.begin() + 5, csv.header.end());
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const auto& fields = csv.rows[i];
        const std::string where = path + " row " + std::to_string(i + 2);
        if (fields.size() != csv.header.size())
            throw std::runtime_error(where + ": wrong field count");
        EventRow row;
        row.tree_id = fields[0];
        row.edge_id = fields[1];
        row.entry_radius = parse_double(fields[2], where + " entry");
        row.exit_radius = parse_double(fields[3], where + " exit");
        row.status = event_status_from_string(fields[4]);
        if (!(row.entry_radius < row.exit_radius))
            throw std::runtime_error(where + ": entry must be below exit");
        for (std::size_t j = 5; j < fields.size(); ++j)
            row.covariates.push_back(parse_double(fields[j], where));
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace topohazard
