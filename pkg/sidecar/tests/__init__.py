# Package marker so these modules never shadow the top-level test suite's
# conftest under pytest's prepend import mode.
