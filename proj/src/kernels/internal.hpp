#pragma once

#include "ccldc/kernels.hpp"

namespace ccldc::kernels::detail {

#if defined(CCLDC_HAVE_AVX2)
const KernelTable& avx2_table_impl();
#endif
#if defined(CCLDC_HAVE_NEON)
const KernelTable& neon_table_impl();
#endif

}  // namespace ccldc::kernels::detail
