"""JSON schema validation with path-bearing errors."""
import jsonschema

from .errors import ConfigError


def validate(doc, schema):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, err.json_path)
