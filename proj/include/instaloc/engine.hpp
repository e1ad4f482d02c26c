#pragma once

#include <optional>
#include <stdexcept>

#include "instaloc/descriptor.hpp"
#include "instaloc/embedding.hpp"

namespace instaloc {

/// Selects between the handcrafted geometric descriptor and a trained
/// embedding model behind one describe() call.
class DescriptorEngine {
  public:
    static DescriptorEngine geometric(size_t dim = kDefaultDescriptorDim) {
        DescriptorEngine e;
        e.dim_ = dim;
        return e;
    }

    static DescriptorEngine learned(EmbeddingModel model) {
        model.validate();
        DescriptorEngine e;
        e.dim_ = static_cast<size_t>(model.descriptor_dim);
        e.model_ = std::move(model);
        return e;
    }

    Descriptor describe(const ObjectInstance& inst) const {
        return model_ ? embed(*model_, inst) : geometric_descriptor(inst, dim_);
    }

    size_t dim() const { return dim_; }
    bool is_learned() const { return model_.has_value(); }

  private:
    std::optional<EmbeddingModel> model_;
    size_t dim_ = kDefaultDescriptorDim;
};

}  // namespace instaloc
