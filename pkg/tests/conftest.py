from hypothesis import settings

# root finding falls back to multiprecision on clustered cases, so per-example
# time varies too much for the default deadline
settings.register_profile("ykshaping", deadline=None)
settings.load_profile("ykshaping")
