#ifndef HIERCP_TESTS_HELPERS_HPP
#define HIERCP_TESTS_HELPERS_HPP

#include <random>
#include <string>
#include <vector>

#include "hiercp/taxonomy.hpp"

namespace hiercp::testing {

// Three-level ragged tree: some majors carry minors, some are leaves
// themselves. 12 terminal leaves.
inline const char* kOsTreeText =
    "# family / major / minor\n"
    "Windows\t\n"
    "Linux\t\n"
    "Android\t\n"
    "iOS\t\n"
    "Windows 10\tWindows\n"
    "Windows 11\tWindows\n"
    "Windows 7\tWindows\n"
    "Ubuntu\tLinux\n"
    "Debian\tLinux\n"
    "Android 11\tAndroid\n"
    "Android 12\tAndroid\n"
    "Android 13\tAndroid\n"
    "iOS 16\tiOS\n"
    "iOS 17\tiOS\n"
    "Windows 10 22H2\tWindows 10\n"
    "Windows 10 21H2\tWindows 10\n"
    "Windows 11 23H2\tWindows 11\n"
    "Ubuntu 22.04\tUbuntu\n"
    "Ubuntu 24.04\tUbuntu\n"
    "Android 12L\tAndroid 12\n"
    "iOS 16.5\tiOS 16\n";

inline Taxonomy os_tree() { return Taxonomy::parse(kOsTreeText); }

// Random ragged forest with forward references in the node order.
inline std::string random_tree_text(std::mt19937_64& rng, int n_nodes, int max_depth = 4) {
    std::vector<int> parent(static_cast<std::size_t>(n_nodes), -1);
    std::vector<int> depth(static_cast<std::size_t>(n_nodes), 1);
    for (int i = 1; i < n_nodes; ++i) {
        if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.15) continue; // new root
        int p = static_cast<int>(std::uniform_int_distribution<int>(0, i - 1)(rng));
        if (depth[static_cast<std::size_t>(p)] >= max_depth) continue;
        parent[static_cast<std::size_t>(i)] = p;
        depth[static_cast<std::size_t>(i)] = depth[static_cast<std::size_t>(p)] + 1;
    }
    std::vector<int> order(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::string text;
    for (int i : order) {
        text += "n" + std::to_string(i) + "\t";
        if (parent[static_cast<std::size_t>(i)] >= 0) {
            text += "n" + std::to_string(parent[static_cast<std::size_t>(i)]);
        }
        text += "\n";
    }
    return text;
}

} // namespace hiercp::testing

#endif
