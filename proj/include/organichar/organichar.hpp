#pragma once

#include "organichar/common.hpp"
#include "organichar/session.hpp"
#include "organichar/synthetic.hpp"
#include "organichar/features.hpp"
#include "organichar/reduce.hpp"
#include "organichar/gmm.hpp"
#include "organichar/hdbscan.hpp"
#include "organichar/keymoments.hpp"
#include "organichar/lexicon.hpp"
#include "organichar/annotate.hpp"
#include "organichar/labels.hpp"
#include "organichar/classifiers.hpp"
#include "organichar/har.hpp"
#include "organichar/remote.hpp"
#include "organichar/pipeline.hpp"
#include "organichar/incremental.hpp"
