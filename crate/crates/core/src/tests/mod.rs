//! Cross-module oracle and property suites.

mod properties;
