import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

import requests

from abrsi.data import PreprocessRecipe
from abrsi.errors import DataError
from abrsi.sources import ensure_dataset, fetch_dataset

URL = "https://example.org/files/toy.csv"


def make_recipe(source_url=URL):
    return PreprocessRecipe.model_validate({
        "name": "toy",
        "label_column": "attack",
        "selected_features": ["bytes"],
        "label_map": {"normal": "normal"},
        "source_url": source_url,
    })


def streamed_response(chunks):
    response = MagicMock()
    response.iter_content.return_value = chunks
    get = MagicMock()
    get.return_value.__enter__.return_value = response
    return get, response


class FetchTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.cache = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_download_is_written_atomically(self):
        get, _ = streamed_response([b"bytes,attack\n", b"1,normal\n"])
        destination = self.cache / "toy" / "toy.csv"
        with patch('abrsi.sources.fetch.requests.get', get):
            path = fetch_dataset(URL, destination, timeout=5)
        get.assert_called_once_with(URL, stream=True, timeout=5)
        self.assertEqual(path.read_bytes(), b"bytes,attack\n1,normal\n")
        self.assertFalse(destination.with_name("toy.csv.part").exists())

    def test_http_error_leaves_no_partial_file(self):
        get, response = streamed_response([])
        response.raise_for_status.side_effect = requests.exceptions.HTTPError("404 Client Error")
        destination = self.cache / "toy.csv"
        with patch('abrsi.sources.fetch.requests.get', get):
            with self.assertRaises(DataError):
                fetch_dataset(URL, destination)
        self.assertEqual(os.listdir(self.cache), [])

    def test_existing_file_is_used_as_is(self):
        local = self.cache / "local.csv"
        local.write_text("bytes,attack\n")
        with patch('abrsi.sources.fetch.requests.get') as get:
            self.assertEqual(ensure_dataset(local, make_recipe(), self.cache), local)
        get.assert_not_called()

    def test_cached_copy_is_reused(self):
        cached = self.cache / "toy" / "toy.csv"
        cached.parent.mkdir()
        cached.write_text("bytes,attack\n")
        with patch('abrsi.sources.fetch.requests.get') as get:
            self.assertEqual(ensure_dataset(None, make_recipe(), self.cache), cached)
        get.assert_not_called()

    def test_missing_file_is_downloaded_into_cache(self):
        get, _ = streamed_response([b"bytes,attack\n"])
        with patch('abrsi.sources.fetch.requests.get', get):
            path = ensure_dataset(self.cache / "absent.csv", make_recipe(), self.cache)
        self.assertEqual(path, self.cache / "toy" / "toy.csv")

    def test_missing_file_without_url(self):
        with self.assertRaises(DataError):
            ensure_dataset(self.cache / "absent.csv", make_recipe(source_url=None), self.cache)


if __name__ == '__main__':
    unittest.main()
