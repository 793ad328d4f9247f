#ifndef HIERCP_TAXONOMY_HPP
#define HIERCP_TAXONOMY_HPP

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hiercp {

using NodeIndex = int;

// Layer selector: levels are 1..depth(); kLeafLayer selects the terminal-leaf
// label space, which mixes levels when branches terminate early.
constexpr int kLeafLayer = 0;

struct NodeId {
    std::string name;
    NodeIndex index = -1;
};

// Rooted (possibly multi-root) label tree with levels inferred from path
// depth. Immutable after parse; concurrent reads are safe.
class Taxonomy {
public:
    // One node per line: `name<TAB>parent`. A root line has an empty parent
    // field or no tab at all. Lines starting with '#' are comments. Parents
    // may be referenced before their own line appears.
    static Taxonomy parse(std::string_view text);
    static Taxonomy load(const std::string& path);

    int depth() const { return depth_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }

    const std::string& name_of(NodeIndex node) const;
    NodeIndex index_of(std::string_view name) const; // throws on unknown name
    std::optional<NodeIndex> find(std::string_view name) const;

    int level_of(NodeIndex node) const;
    std::optional<NodeIndex> parent_of(NodeIndex node) const;
    const std::vector<NodeIndex>& children_of(NodeIndex node) const;
    bool is_leaf(NodeIndex node) const;

    // Nodes of one level in load order; defines probability column order.
    const std::vector<NodeIndex>& level_nodes(int level) const;
    // All childless nodes in load order (the terminal-leaf label space).
    const std::vector<NodeIndex>& leaves() const { return leaves_; }
    // level_nodes(layer) for layer >= 1, leaves() for kLeafLayer.
    const std::vector<NodeIndex>& layer_nodes(int layer) const;

    std::vector<NodeIndex> leaf_descendants(NodeIndex node) const;
    // The unique level-k node on the path from a root down to `node`;
    // absent when the node sits above level k.
    std::optional<NodeIndex> ancestor_at_level(NodeIndex node, int level) const;

    // Position of a node within layer_nodes(layer), or -1 when absent.
    int layer_position(int layer, NodeIndex node) const;

    // True for levels 1..depth and kLeafLayer.
    bool valid_layer(int layer) const { return layer == kLeafLayer || (layer >= 1 && layer <= depth_); }
    // Human-readable layer token used in file formats: "leaf" or the level number.
    static std::string layer_token(int layer);
    static int parse_layer_token(std::string_view token, int depth);

private:
    struct Node {
        std::string name;
        int level = 0;
        NodeIndex parent = -1;
        std::vector<NodeIndex> children;
        std::vector<NodeIndex> path; // root..self, path[k-1] is the level-k ancestor
        int level_pos = -1;          // position within its level list
        int leaf_pos = -1;           // position within leaves(), -1 for internal nodes
    };

    void check_node(NodeIndex node) const;

    std::vector<Node> nodes_;
    std::vector<std::vector<NodeIndex>> by_level_;
    std::vector<NodeIndex> leaves_;
    std::unordered_map<std::string, NodeIndex> by_name_;
    int depth_ = 0;
};

} // namespace hiercp

#endif
