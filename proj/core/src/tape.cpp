#include "cdk/tape.hpp"

#include "cdk/error.hpp"

namespace cdk {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const char* op, Tensor output, std::function<void()> backward) {
    nodes_.push_back(TapeNode{op, std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& root) {
    if (root.numel() != 1)
        fail("E_SHAPE", "backward root must be scalar, got " + shape_str(root.shape()));
    for (TapeNode& node : nodes_) node.output.zero_grad();
    Tensor seed = root;
    seed.mutable_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

} // namespace cdk
