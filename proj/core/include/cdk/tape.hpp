#pragma once

#include <functional>
#include <vector>

#include "cdk/tensor.hpp"

namespace cdk {

/// One recorded step of a forward evaluation. The closure reads the output
/// gradient and accumulates into the input gradients; values needed for the
/// backward pass are captured inside it.
struct TapeNode {
    const char* op;
    Tensor output;
    std::function<void()> backward;
};

/// Reverse-mode tape. Operators record onto the thread's active tape (if any);
/// backward() replays nodes in exact reverse creation order. Leaf gradients
/// (parameters, inputs) accumulate until explicitly zeroed; gradients of
/// tape-produced intermediates reset at the start of every backward call.
class Tape {
public:
    /// RAII activation for the current thread. Forward ops called inside the
    /// scope record onto this tape; nested scopes restore the previous tape.
    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    static Tape* active();

    void record(const char* op, Tensor output, std::function<void()> backward);

    /// Seeds d(root) = 1 and replays the tape backwards. root must be scalar.
    void backward(const Tensor& root);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    std::vector<TapeNode> nodes_;
};

} // namespace cdk
