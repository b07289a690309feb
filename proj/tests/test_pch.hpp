#pragma once

#include <torch/torch.h>

// c10 logging defines glog-style CHECK macros; the tests use doctest's
#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LT
#undef CHECK_LE
#undef CHECK_GT
#undef CHECK_GE

#include <doctest.h>
