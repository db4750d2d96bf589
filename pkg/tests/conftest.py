from hypothesis import settings

# property tests draw the same examples every run; the whole suite is
# deterministic end to end
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")
