#pragma once

// Floating-point element type for all tensor arithmetic. Double by default;
// single precision is a build-time option (-DGSABT_SINGLE_PRECISION=ON) for
// speed at the cost of the tight tolerances the test suite assumes.

namespace gsabt {

#ifdef GSABT_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

}  // namespace gsabt
