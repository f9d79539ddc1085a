#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lad/tensor.hpp"

namespace lad {

// Deep copy of every parameter tensor plus the state of the RNG that
// produced the initialization. restore() makes parameters bit-identical.
struct WeightSnapshot {
    std::vector<std::pair<std::string, Tensor>> tensors;  // registration order
    uint64_t init_seed = 0;
    std::string init_rng_state;
};

// Named parameter tensors with per-parameter trainable flags and a single
// group tag each (backbone-layer-i / probe-i / main-classifier).
class ParameterSet {
public:
    void add(const std::string& name, Tensor value, const std::string& group);

    bool has(const std::string& name) const { return entries_.count(name) > 0; }
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    const std::string& group(const std::string& name) const;
    bool trainable(const std::string& name) const;
    void set_trainable(const std::string& name, bool trainable);
    void set_group_trainable(const std::string& group, bool trainable);
    void set_all_trainable(bool trainable);

    const std::vector<std::string>& names() const { return order_; }
    std::vector<std::string> groups() const;  // unique, first-seen order
    std::vector<std::string> names_in_group(const std::string& group) const;
    int64_t scalar_count(bool trainable_only = false) const;

    WeightSnapshot snapshot() const;
    void restore(const WeightSnapshot& snap);  // throws on structural mismatch

    // FNV-1a over the raw bytes of every tensor in the group, name order.
    uint64_t group_checksum(const std::string& group) const;

private:
    struct Entry {
        Tensor value;
        std::string group;
        bool trainable = true;
    };
    std::vector<std::string> order_;
    std::unordered_map<std::string, Entry> entries_;

    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;
};

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 1469598103934665603ull);

}  // namespace lad
