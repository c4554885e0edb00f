#pragma once

#include <functional>
#include <vector>

#include "almt/errors.hpp"
#include "almt/tensor.hpp"

namespace almt {

// Records the backward rule of every differentiable op in execution order.
// Ops append on creation, so each entry's inputs precede it and replaying the
// entries in reverse propagates gradients to every requires_grad tensor
// reachable from the loss. A tape and its tensors form one exclusive unit;
// distinct tapes may run in parallel.
template <typename T>
class TapeT {
public:
    explicit TapeT(bool recording = true) : recording_(recording) {}

    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    bool recording() const { return recording_; }

    void record(std::function<void()> backward_rule, const TensorT<T>& output) {
        if (recording_) nodes_.push_back({std::move(backward_rule), output});
    }

    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Intermediate
    // gradients are reset per pass; leaf gradients accumulate across passes
    // until explicitly zeroed.
    void backward(TensorT<T>& loss) {
        if (loss.numel() != 1)
            throw ValidationError("backward: loss must be a scalar tensor, got shape " +
                                  loss.shape().str());
        if (!loss.requires_grad())
            throw ValidationError("backward: loss does not depend on any tracked tensor");
        for (auto& node : nodes_)
            if (!node.output.is_leaf()) node.output.zero_grad();
        loss.grad()[0] = static_cast<T>(static_cast<double>(loss.grad()[0]) + 1.0);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->rule();
    }

private:
    struct Node {
        std::function<void()> rule;
        TensorT<T> output;
    };
    bool recording_;
    std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

} // namespace almt
