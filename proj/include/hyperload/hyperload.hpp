#pragma once

#include "hyperload/errors.hpp"
#include "hyperload/autograd.hpp"
#include "hyperload/nn.hpp"
#include "hyperload/dataset.hpp"
#include "hyperload/revin.hpp"
#include "hyperload/cats_template.hpp"
#include "hyperload/tokenizer.hpp"
#include "hyperload/sample.hpp"
#include "hyperload/serialize.hpp"
#include "hyperload/alignment.hpp"
#include "hyperload/forecaster.hpp"
#include "hyperload/evalbench.hpp"
#include "hyperload/report.hpp"
#include "hyperload/config.hpp"
