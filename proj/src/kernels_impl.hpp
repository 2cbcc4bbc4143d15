#pragma once

#include "atxf/kernels.hpp"

namespace atxf::kernels {

namespace scalar {
template <typename T>
const KernelTable<T>& table();
}

#if defined(ATXF_HAVE_AVX2)
namespace avx2 {
template <typename T>
const KernelTable<T>& table();
}
#endif

}  // namespace atxf::kernels
