#include "lad/params.hpp"

#include <stdexcept>

namespace lad {

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

void ParameterSet::add(const std::string& name, Tensor value, const std::string& group) {
    if (entries_.count(name)) throw std::invalid_argument("ParameterSet: duplicate name " + name);
    if (group.empty()) throw std::invalid_argument("ParameterSet: empty group for " + name);
    order_.push_back(name);
    entries_.emplace(name, Entry{std::move(value), group, true});
}

ParameterSet::Entry& ParameterSet::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("ParameterSet: unknown parameter " + name);
    return it->second;
}

const ParameterSet::Entry& ParameterSet::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("ParameterSet: unknown parameter " + name);
    return it->second;
}

Tensor& ParameterSet::value(const std::string& name) { return entry(name).value; }
const Tensor& ParameterSet::value(const std::string& name) const { return entry(name).value; }
const std::string& ParameterSet::group(const std::string& name) const { return entry(name).group; }
bool ParameterSet::trainable(const std::string& name) const { return entry(name).trainable; }
void ParameterSet::set_trainable(const std::string& name, bool t) { entry(name).trainable = t; }

void ParameterSet::set_group_trainable(const std::string& group, bool t) {
    bool found = false;
    for (const auto& name : order_) {
        Entry& e = entry(name);
        if (e.group == group) {
            e.trainable = t;
            found = true;
        }
    }
    if (!found) throw std::out_of_range("ParameterSet: unknown group " + group);
}

void ParameterSet::set_all_trainable(bool t) {
    for (const auto& name : order_) entry(name).trainable = t;
}

std::vector<std::string> ParameterSet::groups() const {
    std::vector<std::string> out;
    for (const auto& name : order_) {
        const std::string& g = entry(name).group;
        bool seen = false;
        for (const auto& x : out) seen |= (x == g);
        if (!seen) out.push_back(g);
    }
    return out;
}

std::vector<std::string> ParameterSet::names_in_group(const std::string& group) const {
    std::vector<std::string> out;
    for (const auto& name : order_)
        if (entry(name).group == group) out.push_back(name);
    return out;
}

int64_t ParameterSet::scalar_count(bool trainable_only) const {
    int64_t n = 0;
    for (const auto& name : order_) {
        const Entry& e = entry(name);
        if (!trainable_only || e.trainable) n += e.value.numel();
    }
    return n;
}

WeightSnapshot ParameterSet::snapshot() const {
    WeightSnapshot snap;
    snap.tensors.reserve(order_.size());
    for (const auto& name : order_) snap.tensors.emplace_back(name, entry(name).value);
    return snap;
}

void ParameterSet::restore(const WeightSnapshot& snap) {
    if (snap.tensors.size() != order_.size())
        throw std::invalid_argument("restore: snapshot has " + std::to_string(snap.tensors.size()) +
                                    " tensors, model has " + std::to_string(order_.size()));
    for (const auto& [name, tensor] : snap.tensors) {
        if (!has(name)) throw std::invalid_argument("restore: snapshot parameter " + name + " not in model");
        Tensor& dst = entry(name).value;
        if (!dst.same_shape(tensor))
            throw std::invalid_argument("restore: shape mismatch for " + name);
        dst.data = tensor.data;
    }
}

uint64_t ParameterSet::group_checksum(const std::string& group) const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& name : order_) {
        const Entry& e = entry(name);
        if (e.group != group) continue;
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(e.value.data.data(), e.value.data.size() * sizeof(Real), h);
    }
    return h;
}

}  // namespace lad
