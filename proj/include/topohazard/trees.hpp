#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "topohazard/step_curve.hpp"

namespace topohazard {

enum class NodeKind { root, branch, leaf, censored, pass_through };
enum class EventStatus { leaf, branch, censored };

std::string to_string(NodeKind kind);
std::string to_string(EventStatus status);
EventStatus event_status_from_string(const std::string& s);

struct TreeNode {
    std::string id;
    std::array<double, 3> coords{0.0, 0.0, 0.0};  // z stays 0 for planar trees
    NodeKind kind = NodeKind::leaf;
};

struct TreeEdge {
    std::string parent;
    std::string child;
    double width = 1.0;
    std::vector<std::array<double, 3>> polyline;  // parent coords ... child coords
};

/// Rooted tree embedded in the plane or in 3-space, filtered outward by
/// radial distance from the root. Censored nodes mark edges cut off by the
/// observation window; they stay in risk sets but never count as events.
struct MetricTree {
    std::string tree_id;
    std::vector<TreeNode> nodes;
    std::vector<TreeEdge> edges;
    int dim = 2;

    const TreeNode& node(const std::string& id) const;
    const TreeNode& root() const;

    /// Single root, connected and acyclic parent structure, polylines matching
    /// node coordinates, censored/leaf nodes childless. Throws on violation.
    void validate() const;

    /// Collapses degree-2 pass-through nodes, concatenating polylines; the
    /// merged width is the arclength-weighted mean.
    MetricTree contracted() const;
};

/// Parses either a single tree object or an array of them.
std::vector<MetricTree> trees_from_json_file(const std::string& path);
std::vector<MetricTree> trees_from_json_text(const std::string& text);
std::string trees_to_json_text(std::span<const MetricTree> trees);

/// Edge ids ("parent->child") whose polyline meets the sphere of radius r
/// centered at the root; exact segment-sphere intersection per segment.
std::vector<std::string> radial_risk_set(const MetricTree& tree, double r);

struct EventRow {
    std::string tree_id;
    std::string edge_id;
    double entry_radius = 0.0;
    double exit_radius = 0.0;
    EventStatus status = EventStatus::censored;
    std::vector<double> covariates;
};

/// One row per edge with entry/exit radii (delayed-entry interval encoding)
/// and per-edge covariates; the input to the hazard fitters.
struct EventTable {
    std::vector<std::string> covariate_names;
    std::vector<EventRow> rows;
    std::vector<std::string> warnings;

    std::size_t covariate_index(const std::string& name) const;
};

/// Builds the event/covariate table. Covariates per edge: width, Euclidean
/// parent-child distance, path-length ratio, node count within
/// proximity_radius of the child, generation order, azimuth of the child from
/// vertical in [0, pi], and the child's own child count. Inward-growing edges
/// (exit <= entry) are excluded with a warning.
EventTable build_event_table(std::span<const MetricTree> trees,
                             double proximity_radius = 200.0);

/// Nelson-Aalen over radius with risk sets {entry < r <= exit}; jumps
/// (events at r)/(at risk at r).
StepCurve tree_nelson_aalen(const EventTable& table, EventStatus event);

void write_event_table_csv(const EventTable& table, const std::string& path);
EventTable read_event_table_csv(const std::string& path);

}  // namespace topohazard
