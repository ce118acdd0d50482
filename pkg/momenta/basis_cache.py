import json
import logging
import os
import sqlite3
from contextlib import closing
from dataclasses import dataclass
from datetime import datetime
from typing import List, Optional

from momenta.basis_builder import InvariantSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BasisKey:
    """What determines a generated invariant set.

    Attributes:
        lmax: The largest moment order.
        flavor: "volumetric" or "spherical".
        mode: "specific", "minimal" or "langbein".
        robust: The anchoring part as "L,P", empty when not applicable.
        seed: Seed of the selection point.
        tolerance: Acceptance tolerance of the selection.
        bounds: The candidate pool bounds, as a short string.
    """

    lmax: int
    flavor: str
    mode: str
    robust: str
    seed: int
    tolerance: float
    bounds: str = ""


class BasisCache:
    """Generated invariant sets stored in an SQLite database."""

    def __init__(self, cache_directory: str):
        os.makedirs(cache_directory, exist_ok=True)
        self.cache_directory = cache_directory
        self.database_file = os.path.join(cache_directory, "basis_cache.db")
        self.conn = sqlite3.connect(self.database_file, isolation_level=None)
        self._init_database()

    def _init_database(self):
        """Initialize database tables and indexes."""
        with closing(self.conn.cursor()) as cursor:
            cursor.execute("PRAGMA journal_mode=WAL")
            cursor.execute("PRAGMA busy_timeout = 30000")

            cursor.execute("""
                    CREATE TABLE IF NOT EXISTS basis_cache (
                        lmax INTEGER NOT NULL,
                        flavor TEXT NOT NULL,
                        mode TEXT NOT NULL,
                        robust TEXT NOT NULL,
                        seed INTEGER NOT NULL,
                        tolerance REAL NOT NULL,
                        bounds TEXT NOT NULL,
                        invariant_set TEXT NOT NULL,
                        ctime TIMESTAMP NOT NULL,
                        atime TIMESTAMP NOT NULL,
                        PRIMARY KEY (lmax, flavor, mode, robust, seed, tolerance, bounds)
                    )
                """)

            cursor.execute(
                "CREATE INDEX IF NOT EXISTS idx_cleanup ON basis_cache(atime)"
            )

    @staticmethod
    def _key_tuple(key: BasisKey) -> tuple:
        return (
            key.lmax,
            key.flavor,
            key.mode,
            key.robust,
            key.seed,
            key.tolerance,
            key.bounds,
        )

    def get(self, key: BasisKey) -> Optional[InvariantSet]:
        """Return the cached set and update its access time, None on a miss."""
        with self.conn, closing(self.conn.cursor()) as cursor:
            cursor.execute("BEGIN IMMEDIATE")
            cursor.execute(
                """
                SELECT invariant_set FROM basis_cache
                WHERE lmax = ? AND flavor = ? AND mode = ? AND robust = ? AND seed = ?
                    AND tolerance = ? AND bounds = ?
                """,
                self._key_tuple(key),
            )
            row = cursor.fetchone()
            if row is None:
                logger.debug("Cache miss for %s", key)
                return None
            cursor.execute(
                """
                UPDATE basis_cache SET atime = ?
                WHERE lmax = ? AND flavor = ? AND mode = ? AND robust = ? AND seed = ?
                    AND tolerance = ? AND bounds = ?
                """,
                (datetime.now(),) + self._key_tuple(key),
            )
        logger.info("Cache hit for %s", key)
        return InvariantSet.from_json(json.loads(row[0]))

    def put(self, key: BasisKey, invariant_set: InvariantSet) -> None:
        now = datetime.now()
        with self.conn, closing(self.conn.cursor()) as cursor:
            cursor.execute("BEGIN IMMEDIATE")
            cursor.execute(
                """
                INSERT OR REPLACE INTO basis_cache
                (lmax, flavor, mode, robust, seed, tolerance, bounds, invariant_set,
                 ctime, atime)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                """,
                self._key_tuple(key) + (json.dumps(invariant_set.to_json()), now, now),
            )
        logger.debug("Cached %s members for %s", len(invariant_set), key)

    def remove(self, key: BasisKey) -> bool:
        with self.conn, closing(self.conn.cursor()) as cursor:
            cursor.execute("BEGIN IMMEDIATE")
            cursor.execute(
                """
                DELETE FROM basis_cache
                WHERE lmax = ? AND flavor = ? AND mode = ? AND robust = ? AND seed = ?
                    AND tolerance = ? AND bounds = ?
                """,
                self._key_tuple(key),
            )
            return cursor.rowcount > 0

    def count(self) -> int:
        with closing(self.conn.cursor()) as cursor:
            cursor.execute("SELECT COUNT(*) FROM basis_cache")
            return cursor.fetchone()[0]

    def keys(self) -> List[BasisKey]:
        """All cached keys, least recently used first."""
        with closing(self.conn.cursor()) as cursor:
            cursor.execute("""
                SELECT lmax, flavor, mode, robust, seed, tolerance, bounds
                FROM basis_cache ORDER BY atime ASC
                """)
            return [BasisKey(*row) for row in cursor.fetchall()]

    def purge(self, max_entries: int = 0) -> int:
        """Remove the least recently used sets until at most `max_entries` remain.

        Returns:
            The number of removed sets.
        """
        with self.conn, closing(self.conn.cursor()) as cursor:
            cursor.execute("BEGIN IMMEDIATE")
            cursor.execute("SELECT COUNT(*) FROM basis_cache")
            current_count = cursor.fetchone()[0]
            excess = current_count - max_entries
            if excess <= 0:
                logger.debug("Purge not required")
                return 0
            cursor.execute(
                """
                DELETE FROM basis_cache WHERE rowid IN (
                    SELECT rowid FROM basis_cache ORDER BY atime ASC LIMIT ?
                )
                """,
                (excess,),
            )
            logger.debug("Removed %s cached sets", excess)
            return excess

    def close(self):
        """Close the database connection."""
        self.conn.close()
