import logging
import os
from datetime import datetime, timezone

import peewee as pw

from . import config

__all__ = ["DB", "DBRun"]

# DEBUG level writes all SQL queries to output
logger = logging.getLogger("peewee")
logger.setLevel(logging.ERROR)

DB_FILE = "gmreplay.sqlite"

cfg = config.get_config()
if os.path.isdir(cfg.OUT_DIR) and os.access(cfg.OUT_DIR, os.W_OK):
    DB = pw.SqliteDatabase(os.path.join(cfg.OUT_DIR, DB_FILE))
else:
    DB = pw.SqliteDatabase(":memory:")


# Peewee does not support datetimes with tzinfo...
class DateTimeTzField(pw.Field):
    field_type = "TEXT"

    def db_value(self, value: datetime) -> str:
        if value:
            return value.isoformat()

    def python_value(self, value: str) -> datetime:
        if value:
            return datetime.fromisoformat(value)


def utcnow():
    return datetime.now(timezone.utc)


class DBRun(pw.Model):
    id = pw.AutoField()
    run_id = pw.CharField(unique=True)
    config_hash = pw.CharField()
    model = pw.CharField()
    dataset = pw.CharField()
    slt = pw.CharField()
    seed = pw.IntegerField()
    epsilon = pw.FloatField(null=True)
    status = pw.CharField(default="running")
    max_accuracy = pw.FloatField(null=True)
    metrics_path = pw.CharField(null=True)
    checkpoint_path = pw.CharField(null=True)
    created = DateTimeTzField(default=utcnow)

    class Meta:
        database = DB
        table_name = "run"


def out_dir_changed(pth):
    """Rebind the registry to ``<pth>/gmreplay.sqlite``."""
    if not DB.is_closed():
        DB.close()
    DB.init(os.path.join(pth, DB_FILE))
    DB.connect()
    DB.create_tables([DBRun])


def record_run(**fields):
    """Insert or replace the registry row of ``fields['run_id']``."""
    with DB.atomic():
        DBRun.delete().where(DBRun.run_id == fields["run_id"]).execute()
        return DBRun.create(**fields)


def update_run(run_id, **fields):
    DBRun.update(**fields).where(DBRun.run_id == run_id).execute()


def find_run(run_id):
    """Registry row of ``run_id`` or None."""
    try:
        return DBRun.select().where(DBRun.run_id == run_id).get()
    except pw.DoesNotExist:
        return None


DB.connect()
DB.create_tables([DBRun])
