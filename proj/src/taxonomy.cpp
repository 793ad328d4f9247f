#include "hiercp/taxonomy.hpp"

#include <algorithm>
#include <cctype>

#include "hiercp/error.hpp"
#include "hiercp/text.hpp"

namespace hiercp {

namespace {

// Separators reserved by the text formats (CSV headers, set groups).
constexpr std::string_view kReservedChars = "\t,;:{}|";

void check_name(const std::string& name, std::size_t line_no) {
    std::string where = "line " + std::to_string(line_no) + ": ";
    if (name.empty()) throw ValidationError(where + "empty node name");
    if (name.find_first_of(kReservedChars) != std::string::npos) {
        throw ValidationError(where + "node name '" + name +
                              "' contains a reserved character (one of ,;:{}| or tab)");
    }
    if (std::isspace(static_cast<unsigned char>(name.front())) ||
        std::isspace(static_cast<unsigned char>(name.back()))) {
        throw ValidationError(where + "node name must not begin or end with whitespace");
    }
    if (name.front() == '#') {
        throw ValidationError(where + "node name must not begin with '#'");
    }
}

} // namespace

Taxonomy Taxonomy::parse(std::string_view text) {
    Taxonomy t;
    std::vector<std::string> parent_names;
    std::size_t line_no = 0;
    for (const std::string& line : split_lines(text)) {
        ++line_no;
        if (line.empty() || trim(line).empty() || line.front() == '#') continue;
        std::size_t tab = line.find('\t');
        std::string name = tab == std::string::npos ? line : line.substr(0, tab);
        std::string parent = tab == std::string::npos ? std::string() : line.substr(tab + 1);
        if (parent.find('\t') != std::string::npos) {
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": more than one tab separator");
        }
        check_name(name, line_no);
        if (!parent.empty()) check_name(parent, line_no);
        NodeIndex index = static_cast<NodeIndex>(t.nodes_.size());
        if (!t.by_name_.emplace(name, index).second) {
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": duplicate node name '" + name + "'");
        }
        Node node;
        node.name = std::move(name);
        t.nodes_.push_back(std::move(node));
        parent_names.push_back(std::move(parent));
    }
    if (t.nodes_.empty()) throw ValidationError("taxonomy is empty");

    for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
        if (parent_names[i].empty()) continue;
        auto it = t.by_name_.find(parent_names[i]);
        if (it == t.by_name_.end()) {
            throw ValidationError("unknown parent '" + parent_names[i] + "' of node '" +
                                  t.nodes_[i].name + "'");
        }
        t.nodes_[i].parent = it->second;
        t.nodes_[it->second].children.push_back(static_cast<NodeIndex>(i));
    }

    // Levels follow path depth; walking the parent chain also detects cycles.
    enum : char { kUnvisited = 0, kInProgress = 1, kDone = 2 };
    std::vector<char> state(t.nodes_.size(), kUnvisited);
    std::vector<NodeIndex> stack;
    for (NodeIndex start = 0; start < t.node_count(); ++start) {
        if (state[start] == kDone) continue;
        stack.clear();
        NodeIndex cur = start;
        while (true) {
            if (state[cur] == kDone) break;
            if (state[cur] == kInProgress) {
                throw ValidationError("cycle detected through node '" + t.nodes_[cur].name + "'");
            }
            state[cur] = kInProgress;
            stack.push_back(cur);
            if (t.nodes_[cur].parent < 0) break;
            cur = t.nodes_[cur].parent;
        }
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            Node& node = t.nodes_[*it];
            node.level = node.parent < 0 ? 1 : t.nodes_[node.parent].level + 1;
            state[*it] = kDone;
        }
    }

    t.depth_ = 0;
    for (const Node& node : t.nodes_) t.depth_ = std::max(t.depth_, node.level);
    t.by_level_.resize(static_cast<std::size_t>(t.depth_));
    for (NodeIndex i = 0; i < t.node_count(); ++i) {
        Node& node = t.nodes_[i];
        auto& level_list = t.by_level_[static_cast<std::size_t>(node.level) - 1];
        node.level_pos = static_cast<int>(level_list.size());
        level_list.push_back(i);
        if (node.children.empty()) {
            node.leaf_pos = static_cast<int>(t.leaves_.size());
            t.leaves_.push_back(i);
        }
    }
    // Paths are built by level so a parent's path exists before its
    // children's, regardless of file order.
    for (const auto& level_list : t.by_level_) {
        for (NodeIndex i : level_list) {
            Node& node = t.nodes_[static_cast<std::size_t>(i)];
            if (node.parent >= 0) node.path = t.nodes_[static_cast<std::size_t>(node.parent)].path;
            node.path.push_back(i);
        }
    }
    return t;
}

Taxonomy Taxonomy::load(const std::string& path) {
    return parse(read_text_file(path));
}

void Taxonomy::check_node(NodeIndex node) const {
    if (node < 0 || node >= node_count()) {
        throw ValidationError("unknown node index " + std::to_string(node));
    }
}

const std::string& Taxonomy::name_of(NodeIndex node) const {
    check_node(node);
    return nodes_[static_cast<std::size_t>(node)].name;
}

NodeIndex Taxonomy::index_of(std::string_view name) const {
    auto found = find(name);
    if (!found) throw ValidationError("unknown node name '" + std::string(name) + "'");
    return *found;
}

std::optional<NodeIndex> Taxonomy::find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

int Taxonomy::level_of(NodeIndex node) const {
    check_node(node);
    return nodes_[static_cast<std::size_t>(node)].level;
}

std::optional<NodeIndex> Taxonomy::parent_of(NodeIndex node) const {
    check_node(node);
    NodeIndex parent = nodes_[static_cast<std::size_t>(node)].parent;
    if (parent < 0) return std::nullopt;
    return parent;
}

const std::vector<NodeIndex>& Taxonomy::children_of(NodeIndex node) const {
    check_node(node);
    return nodes_[static_cast<std::size_t>(node)].children;
}

bool Taxonomy::is_leaf(NodeIndex node) const {
    check_node(node);
    return nodes_[static_cast<std::size_t>(node)].children.empty();
}

const std::vector<NodeIndex>& Taxonomy::level_nodes(int level) const {
    if (level < 1 || level > depth_) {
        throw ValidationError("level " + std::to_string(level) + " out of range 1.." +
                              std::to_string(depth_));
    }
    return by_level_[static_cast<std::size_t>(level) - 1];
}

const std::vector<NodeIndex>& Taxonomy::layer_nodes(int layer) const {
    if (layer == kLeafLayer) return leaves_;
    return level_nodes(layer);
}

std::vector<NodeIndex> Taxonomy::leaf_descendants(NodeIndex node) const {
    check_node(node);
    std::vector<NodeIndex> result;
    std::vector<NodeIndex> stack{node};
    while (!stack.empty()) {
        NodeIndex cur = stack.back();
        stack.pop_back();
        const Node& n = nodes_[static_cast<std::size_t>(cur)];
        if (n.children.empty()) {
            result.push_back(cur);
        } else {
            stack.insert(stack.end(), n.children.begin(), n.children.end());
        }
    }
    std::sort(result.begin(), result.end());
    return result;
}

std::optional<NodeIndex> Taxonomy::ancestor_at_level(NodeIndex node, int level) const {
    check_node(node);
    if (level < 1 || level > depth_) {
        throw ValidationError("level " + std::to_string(level) + " out of range 1.." +
                              std::to_string(depth_));
    }
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    if (level > n.level) return std::nullopt;
    return n.path[static_cast<std::size_t>(level) - 1];
}

int Taxonomy::layer_position(int layer, NodeIndex node) const {
    check_node(node);
    const Node& n = nodes_[static_cast<std::size_t>(node)];
    if (layer == kLeafLayer) return n.leaf_pos;
    if (layer < 1 || layer > depth_) {
        throw ValidationError("level " + std::to_string(layer) + " out of range 1.." +
                              std::to_string(depth_));
    }
    return n.level == layer ? n.level_pos : -1;
}

std::string Taxonomy::layer_token(int layer) {
    return layer == kLeafLayer ? "leaf" : std::to_string(layer);
}

int Taxonomy::parse_layer_token(std::string_view token, int depth) {
    if (trim(token) == "leaf") return kLeafLayer;
    auto value = parse_int(token);
    if (value < 1 || value > depth) {
        throw ValidationError("layer '" + std::string(token) + "' out of range 1.." +
                              std::to_string(depth) + " (or 'leaf')");
    }
    return static_cast<int>(value);
}

} // namespace hiercp
